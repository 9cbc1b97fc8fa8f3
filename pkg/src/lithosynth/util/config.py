# -*- coding: utf-8 -*-
"""
Pipeline configuration and its text file format.

A config file is a sequence of ``[section]`` headers, each followed by
``key = value`` lines. Values are integers, floats, ``true``/``false``,
``none``, double-quoted strings or bracketed lists of values; ``#`` starts
a comment. For example::

    [pipeline]
    master_seed = 7
    output_dir = "out/dataset"

    [render]
    psf_sigma = 2.5

Missing sections and keys take their defaults. :func:`dump_config` writes
the canonical form, which :func:`parse_config` reads back to an equal
config.
"""

from dataclasses import dataclass, field, fields, replace
from enum import Enum
import hashlib
import json
import logging

import pyparsing as pp

from lithosynth.dataset.evaluate import EvaluateConfig
from lithosynth.dataset.export import StatsConfig, check_ratios
from lithosynth.geometry.layout import LibraryConfig
from lithosynth.geometry.morphology import DEFAULT_MEEF
from lithosynth.geometry.topology import ClassifyConfig
from lithosynth.synthesis.annotate import AnnotateConfig
from lithosynth.synthesis.injection import PlanConfig, SamplerConfig
from lithosynth.synthesis.renderer import RenderConfig
from lithosynth.util.exceptions import InvalidConfigError, LithosynthError

logger = logging.getLogger(__name__)


class ConfigParsingElement:
    """Terms of the config-file grammar."""

    l_sqr_brace = pp.Literal("[").suppress()
    r_sqr_brace = pp.Literal("]").suppress()
    equals = pp.Literal("=").suppress()
    comment = pp.Regex(r"#[^\n]*")
    key = pp.Regex(r"[A-Za-z_][A-Za-z0-9_]*")
    boolean = (pp.Keyword("true") | pp.Keyword("false")).set_parse_action(
        lambda t: [t[0] == "true"]
    )
    none = pp.Keyword("none").set_parse_action(lambda t: [None])
    real = pp.Regex(
        r"[-+]?(([0-9]+\.[0-9]*|\.[0-9]+)([eE][-+]?[0-9]+)?|[0-9]+[eE][-+]?[0-9]+)"
    ).set_parse_action(lambda t: [float(t[0])])
    integer = pp.Regex(r"[-+]?[0-9]+").set_parse_action(lambda t: [int(t[0])])
    string = pp.QuotedString('"', esc_char="\\")
    value = pp.Forward()
    value_list = pp.Group(
        l_sqr_brace + pp.Optional(pp.delimited_list(value)) + r_sqr_brace
    )
    value <<= boolean | none | real | integer | string | value_list
    entry = pp.Group(key + equals + value)
    header = l_sqr_brace + key + r_sqr_brace
    section = pp.Group(header + pp.Group(pp.ZeroOrMore(entry)))
    document = pp.ZeroOrMore(section) + pp.StringEnd()
    document.ignore(comment)


@dataclass(frozen=True)
class PipelineConfig:
    """
    Everything one generation run depends on.

    Parameters
    ----------
    master_seed : int
        Seed from which every layout, job and noise seed derives.
    meef : float
        Scalar mask error enhancement factor (placeholder, default 1.4).
    split_ratios : tuple of float
        Target (train, val, test) image fractions.
    output_dir : str
        Dataset directory.
    workers : int
        Worker processes; outputs do not depend on it.
    process_notes : str
        Free-text fabrication metadata (dose, resist, ...), recorded only.
    library, sampler, classify, plan, render, annotate, stats, evaluate
        Per-module configs. The library and plan take `master_seed`, the
        sampler takes `meef` and `classify`.
    """

    master_seed: int = 0
    meef: float = DEFAULT_MEEF
    split_ratios: tuple = (0.8, 0.1, 0.1)
    output_dir: str = "dataset"
    workers: int = 1
    process_notes: str = ""
    library: LibraryConfig = field(default_factory=LibraryConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    classify: ClassifyConfig = field(default_factory=ClassifyConfig)
    plan: PlanConfig = field(default_factory=PlanConfig)
    render: RenderConfig = field(default_factory=RenderConfig)
    annotate: AnnotateConfig = field(default_factory=AnnotateConfig)
    stats: StatsConfig = field(default_factory=StatsConfig)
    evaluate: EvaluateConfig = field(default_factory=EvaluateConfig)

    def __post_init__(self):
        if self.workers < 1:
            raise InvalidConfigError(f"workers {self.workers} < 1")
        if not self.meef > 0:
            raise InvalidConfigError(f"meef {self.meef} must be positive")
        sync = {
            "split_ratios": check_ratios(self.split_ratios),
            "library": replace(self.library, master_seed=self.master_seed),
            "plan": replace(self.plan, master_seed=self.master_seed),
            "sampler": replace(self.sampler, meef=self.meef, classify=self.classify),
        }
        for name, value in sync.items():
            object.__setattr__(self, name, value)


# section name -> (attribute of PipelineConfig, keys filled in from elsewhere)
SECTIONS = {
    "library": ("library", ("master_seed",)),
    "sampler": ("sampler", ("meef", "classify")),
    "classify": ("classify", ()),
    "plan": ("plan", ("master_seed",)),
    "render": ("render", ()),
    "annotate": ("annotate", ()),
    "stats": ("stats", ()),
    "evaluate": ("evaluate", ()),
}
PIPELINE_KEYS = ("master_seed", "meef", "output_dir", "workers", "process_notes")


def _format_value(value):
    if isinstance(value, Enum):
        value = value.value
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_format_value(v) for v in value) + "]"
    raise TypeError(f"cannot write {value!r} to a config file")


def dump_config(cfg):
    """Canonical text form of a :class:`PipelineConfig`."""
    lines = ["[pipeline]"]
    lines += [f"{key} = {_format_value(getattr(cfg, key))}" for key in PIPELINE_KEYS]
    lines += ["", "[split]", f"ratios = {_format_value(cfg.split_ratios)}"]
    for section, (attribute, derived) in SECTIONS.items():
        sub = getattr(cfg, attribute)
        lines += ["", f"[{section}]"]
        for item in fields(sub):
            if item.name not in derived:
                lines.append(f"{item.name} = {_format_value(getattr(sub, item.name))}")
    return "\n".join(lines) + "\n"


def _to_python(value):
    if isinstance(value, pp.ParseResults):
        return [_to_python(v) for v in value]
    return value


def parse_config(text):
    """
    Parses config text.

    Raises
    ------
    InvalidConfigError
        On a syntax error, an unknown section or key, a repeated section
        or an invalid value.
    """
    try:
        parsed = ConfigParsingElement.document.parse_string(text, parse_all=True)
    except pp.ParseBaseException as err:
        raise InvalidConfigError(
            f"line {err.lineno}, column {err.col}: {err.msg}", line=err.lineno
        ) from err
    sections = {}
    for section in parsed:
        name, entries = section[0], section[1]
        if name in sections:
            raise InvalidConfigError(f"section [{name}] appears twice")
        values = {}
        for entry in entries:
            if entry[0] in values:
                raise InvalidConfigError(f"[{name}] {entry[0]} set twice")
            values[entry[0]] = _to_python(entry[1])
        sections[name] = values
    return config_from_sections(sections)


def _check_keys(section, values, allowed):
    unknown = sorted(set(values) - set(allowed))
    if unknown:
        raise InvalidConfigError(f"[{section}] unknown keys: {', '.join(unknown)}")


def config_from_sections(sections):
    """Builds a :class:`PipelineConfig` from ``{section: {key: value}}``."""
    known = set(SECTIONS) | {"pipeline", "split"}
    unknown = sorted(set(sections) - known)
    if unknown:
        raise InvalidConfigError(f"unknown sections: {', '.join(unknown)}")
    kwargs = dict(sections.get("pipeline", {}))
    _check_keys("pipeline", kwargs, PIPELINE_KEYS)
    split = sections.get("split", {})
    _check_keys("split", split, ("ratios",))
    if "ratios" in split:
        kwargs["split_ratios"] = tuple(split["ratios"])
    defaults = PipelineConfig()
    try:
        for section, (attribute, derived) in SECTIONS.items():
            values = sections.get(section, {})
            default = getattr(defaults, attribute)
            allowed = [f.name for f in fields(default) if f.name not in derived]
            _check_keys(section, values, allowed)
            kwargs[attribute] = replace(default, **values)
        return PipelineConfig(**kwargs)
    except InvalidConfigError:
        raise
    except LithosynthError as err:
        raise InvalidConfigError(str(err)) from err
    except (TypeError, ValueError) as err:
        raise InvalidConfigError(str(err)) from err


def load_config(path):
    """Reads a config file; a missing file is an :class:`InvalidConfigError`."""
    try:
        with open(path) as handle:
            text = handle.read()
    except OSError as err:
        raise InvalidConfigError(f"cannot read {path}: {err}", path=str(path)) from err
    return parse_config(text)


def reproducible_config(cfg):
    """
    Copy of `cfg` with the run-only settings (workers, output directory)
    reset, so runs that differ only in those produce identical artifacts.
    """
    defaults = PipelineConfig()
    return replace(cfg, workers=defaults.workers, output_dir=defaults.output_dir)


def config_hash(cfg):
    """sha-256 of the canonical text form of :func:`reproducible_config`."""
    text = dump_config(reproducible_config(cfg))
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def with_overrides(cfg, seed=None, output_dir=None, workers=None):
    """Copy of `cfg` with command-line overrides applied."""
    changes = {}
    if seed is not None:
        changes["master_seed"] = seed
    if output_dir is not None:
        changes["output_dir"] = output_dir
    if workers is not None:
        changes["workers"] = workers
    return replace(cfg, **changes) if changes else cfg
