# -*- coding: utf-8 -*-
import sys

from lithosynth.cli import main

sys.exit(main())
