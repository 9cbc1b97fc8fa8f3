# -*- coding: utf-8 -*-
"""
Constrained random injection of defects into base layouts.

Each defect job draws a target pixel and a structuring-element scale from
its own seed, perturbs the base layout and keeps the result only if the
classifier assigns the class the job's group asks for. Seeds are derived
from ``(master_seed, layout_id, group, index)``, so results do not depend
on the order or the number of processes jobs run in.
"""

from dataclasses import dataclass, field, replace
from enum import Enum
import json
import logging
import warnings

import numpy as np

from lithosynth.geometry.morphology import (
    DEFAULT_MEEF,
    EpeModel,
    PerturbationMode,
    PerturbationSpec,
    SEShape,
    make_se,
    max_boundary_displacement,
    perturb,
    predicted_epe,
)
from lithosynth.geometry.topology import (
    ClassifyConfig,
    DefectClass,
    label_components,
    measure_defect,
)
from lithosynth.util.exceptions import (
    DatasetIOError,
    InvalidConfigError,
    LithosynthError,
    SamplingExhaustedError,
)
from lithosynth.util.helper import canonical_json, derive_seed, ordered_parallel_map

logger = logging.getLogger(__name__)

RECORD_FORMAT_VERSION = 1


class DefectGroup(Enum):
    """
    A defect population: perturbation sign, element shape and target class.
    """

    BRIDGE_SQUARE = "bridge-square"
    PINCH_SQUARE = "pinch-square"
    PINCH_DIAMOND = "pinch-diamond"
    BURR_SQUARE = "burr-square"

    @property
    def sigma(self):
        return -1 if self.target_class is DefectClass.PINCH else 1

    @property
    def se_shape(self):
        if self is DefectGroup.PINCH_DIAMOND:
            return SEShape.DIAMOND
        return SEShape.SQUARE

    @property
    def target_class(self):
        return {
            DefectGroup.BRIDGE_SQUARE: DefectClass.BRIDGE,
            DefectGroup.PINCH_SQUARE: DefectClass.PINCH,
            DefectGroup.PINCH_DIAMOND: DefectClass.PINCH,
            DefectGroup.BURR_SQUARE: DefectClass.BURR,
        }[self]


@dataclass(frozen=True)
class SamplerConfig:
    """
    Settings of the rejection sampler.

    Parameters
    ----------
    r_min, r_max : int
        Inclusive range of structuring-element scales (default 2 to 6).
    max_attempts : int
        Draws per job before :class:`SamplingExhaustedError` (default 1000).
    mode : PerturbationMode
        Footprint (default) or windowed perturbation.
    window_margin : int or None
        Window margin for windowed mode; None means ``2 * r``.
    classify : ClassifyConfig
        Thresholds of the acceptance classifier.
    meef : float
        Scalar mask error enhancement factor (placeholder, default 1.4).
    resample_attempts : int
        Times an exhausted job is retried with a bumped seed (default 0).
    """

    r_min: int = 2
    r_max: int = 6
    max_attempts: int = 1000
    mode: PerturbationMode = PerturbationMode.FOOTPRINT
    window_margin: int = None
    classify: ClassifyConfig = field(default_factory=ClassifyConfig)
    meef: float = DEFAULT_MEEF
    resample_attempts: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mode", PerturbationMode(self.mode))
        if not 1 <= self.r_min <= self.r_max:
            raise InvalidConfigError(f"scale range [{self.r_min}, {self.r_max}]")
        if self.max_attempts < 1:
            raise InvalidConfigError(f"max_attempts {self.max_attempts} < 1")
        if self.window_margin is not None and self.window_margin < 0:
            raise InvalidConfigError(f"window_margin {self.window_margin} < 0")
        if not self.meef > 0:
            raise InvalidConfigError(f"meef {self.meef} must be positive")
        if self.resample_attempts < 0:
            raise InvalidConfigError(f"resample_attempts {self.resample_attempts} < 0")


@dataclass(frozen=True)
class DefectRecord:
    """
    Provenance of one injected defect.

    ``predicted_epe_max`` is always ``meef * delta_b_max``. `rendered_class`
    stays None until the defect pair has been rendered and re-checked;
    `necking_width` (output pixels) is only measured for erosions.
    """

    id: str
    base_layout_id: str
    group: DefectGroup
    spec: PerturbationSpec
    delta_k: int
    defect_class: DefectClass
    delta_b_max: float
    predicted_epe_max: float
    seed: int
    attempts: int = 1
    symmetric_difference_area: int = 0
    rendered_class: DefectClass = None
    necking_width: float = None

    def to_dict(self):
        return {
            "format_version": RECORD_FORMAT_VERSION,
            "id": self.id,
            "base_layout_id": self.base_layout_id,
            "group": self.group.value,
            "spec": self.spec.to_dict(),
            "delta_k": self.delta_k,
            "class": self.defect_class.value,
            "delta_b_max": self.delta_b_max,
            "predicted_epe_max": self.predicted_epe_max,
            "seed": self.seed,
            "attempts": self.attempts,
            "symmetric_difference_area": self.symmetric_difference_area,
            "rendered_class": (
                None if self.rendered_class is None else self.rendered_class.value
            ),
            "necking_width": self.necking_width,
        }

    @classmethod
    def from_dict(cls, record):
        rendered = record.get("rendered_class")
        return cls(
            id=record["id"],
            base_layout_id=record["base_layout_id"],
            group=DefectGroup(record["group"]),
            spec=PerturbationSpec.from_dict(record["spec"]),
            delta_k=int(record["delta_k"]),
            defect_class=DefectClass(record["class"]),
            delta_b_max=float(record["delta_b_max"]),
            predicted_epe_max=float(record["predicted_epe_max"]),
            seed=int(record["seed"]),
            attempts=int(record.get("attempts", 1)),
            symmetric_difference_area=int(record.get("symmetric_difference_area", 0)),
            rendered_class=None if rendered is None else DefectClass(rendered),
            necking_width=(
                None if record.get("necking_width") is None else float(record["necking_width"])
            ),
        )


def sample_defect(a, group, rng_seed, cfg=None, base_layout_id="", defect_id=""):
    """
    Draws perturbations until one realizes the group's target class.

    Parameters
    ----------
    a : BinaryLayout
        Base layout.
    group : DefectGroup
    rng_seed : int
        Seed of this job. The result is a pure function of
        ``(a, group, rng_seed, cfg)``.
    cfg : SamplerConfig or None, optional
    base_layout_id, defect_id : str, optional
        Identifiers copied into the record.

    Returns
    -------
    tuple of (BinaryLayout, DefectRecord)
        The defect layout and its provenance.

    Raises
    ------
    SamplingExhaustedError
        If `cfg.max_attempts` draws all fail the class predicate.
    """
    cfg = SamplerConfig() if cfg is None else cfg
    group = DefectGroup(group)
    rng = np.random.default_rng(rng_seed)
    count_a = label_components(a).count
    target_class = group.target_class
    for attempt in range(1, cfg.max_attempts + 1):
        x = int(rng.integers(0, a.width))
        y = int(rng.integers(0, a.height))
        r = int(rng.integers(cfg.r_min, cfg.r_max + 1))
        spec = PerturbationSpec(
            sigma=group.sigma,
            se=make_se(group.se_shape, r),
            target=(x, y),
            mode=cfg.mode,
            window_margin=cfg.window_margin,
        )
        a_prime = perturb(a, spec)
        if a_prime == a:
            continue
        defect_class, dk, changed_area = measure_defect(
            a, a_prime, spec, cfg.classify, count_a=count_a
        )
        if defect_class is not target_class:
            continue
        delta_b_max = float(max_boundary_displacement(spec.se, spec.sigma))
        record = DefectRecord(
            id=defect_id,
            base_layout_id=base_layout_id,
            group=group,
            spec=spec,
            delta_k=dk,
            defect_class=defect_class,
            delta_b_max=delta_b_max,
            predicted_epe_max=float(predicted_epe(delta_b_max, EpeModel(cfg.meef))),
            seed=int(rng_seed),
            attempts=attempt,
            symmetric_difference_area=changed_area,
        )
        return a_prime, record
    raise SamplingExhaustedError(
        f"{base_layout_id or 'layout'} {group.value}: no {target_class.value} "
        f"in {cfg.max_attempts} attempts",
        layout_id=base_layout_id,
        group=group.value,
    )


def reverify_record(a, record, cfg=None):
    """
    Re-runs perturb and classify from a record's stored provenance.

    Returns
    -------
    bool
        True iff the reproduced class and delta_k equal the stored ones and
        the class is the group's target class.
    """
    cfg = SamplerConfig() if cfg is None else cfg
    a_prime = perturb(a, record.spec)
    defect_class, dk, _ = measure_defect(a, a_prime, record.spec, cfg.classify)
    return (
        defect_class is record.defect_class
        and defect_class is record.group.target_class
        and dk == record.delta_k
    )


# planning


@dataclass(frozen=True)
class PlanConfig:
    """
    Defects scheduled per base layout and group.

    The default asks for 50 bridges with square elements, 50 pinches with
    square elements and 50 pinches with diamond elements per layout.
    """

    bridge_square: int = 50
    pinch_square: int = 50
    pinch_diamond: int = 50
    burr_square: int = 0
    master_seed: int = 0

    def __post_init__(self):
        for group, count in self.counts():
            if count < 0:
                raise InvalidConfigError(f"count of {group.value} is {count} < 0")

    def counts(self):
        """``(group, count)`` pairs in scheduling order."""
        return (
            (DefectGroup.BRIDGE_SQUARE, self.bridge_square),
            (DefectGroup.PINCH_SQUARE, self.pinch_square),
            (DefectGroup.PINCH_DIAMOND, self.pinch_diamond),
            (DefectGroup.BURR_SQUARE, self.burr_square),
        )

    def per_layout(self):
        return sum(count for _, count in self.counts())


@dataclass(frozen=True)
class DefectJob:
    """One scheduled defect: the layout, the group, its index and its seed."""

    layout_id: str
    group: DefectGroup
    index: int
    seed: int

    @property
    def defect_id(self):
        return f"{self.layout_id}-{self.group.value}-{self.index:03d}"


@dataclass(frozen=True)
class DatasetPlan:
    """
    Defect jobs in plan order plus the layouts they refer to.

    Attributes
    ----------
    jobs : tuple of DefectJob
    layouts : dict
        Maps layout id to :class:`BinaryLayout`.
    """

    jobs: tuple
    layouts: dict

    def __len__(self):
        return len(self.jobs)


@dataclass(frozen=True)
class SkippedJob:
    """A job that produced no defect, with the error that stopped it."""

    defect_id: str
    layout_id: str
    group: DefectGroup
    seed: int
    error: dict


@dataclass(frozen=True)
class PlanExecution:
    """
    Outcome of :func:`execute_plan`.

    Attributes
    ----------
    accepted : list of (BinaryLayout, DefectRecord)
        Successful jobs in plan order.
    skipped : list of SkippedJob
        Jobs that raised, in plan order.
    """

    accepted: list
    skipped: list


def generate_plan(library, plan=None):
    """
    Schedules defect jobs for every layout of a library.

    Parameters
    ----------
    library : list of (LayoutSpec, BinaryLayout)
    plan : PlanConfig or None, optional

    Returns
    -------
    DatasetPlan
        ``len(library) * plan.per_layout()`` jobs, grouped by layout in
        library order, then by group, then by index. Job seeds are
        ``derive_seed(master_seed, layout_id, group, index)``.
    """
    plan = PlanConfig() if plan is None else plan
    jobs = []
    layouts = {}
    for spec, layout in library:
        layouts[spec.id] = layout
        for group, count in plan.counts():
            for index in range(count):
                seed = derive_seed(plan.master_seed, spec.id, group, index)
                jobs.append(DefectJob(spec.id, group, index, seed))
    logger.info("scheduled %d defect jobs over %d layouts", len(jobs), len(layouts))
    return DatasetPlan(jobs=tuple(jobs), layouts=layouts)


def run_job(args):
    """
    Runs one job, retrying with bumped seeds if so configured.

    Parameters
    ----------
    args : tuple of (BinaryLayout, DefectJob, SamplerConfig)

    Returns
    -------
    tuple
        ``("ok", a_prime, record)`` or ``("skipped", SkippedJob)``.
    """
    layout, job, cfg = args
    seeds = [job.seed] + [
        derive_seed(job.seed, "resample", ii) for ii in range(1, cfg.resample_attempts + 1)
    ]
    error = None
    for seed in seeds:
        try:
            a_prime, record = sample_defect(
                layout, job.group, seed, cfg, job.layout_id, job.defect_id
            )
        except LithosynthError as err:
            error = err
            continue
        return ("ok", a_prime, record)
    skipped = SkippedJob(job.defect_id, job.layout_id, job.group, job.seed, error.errpacket())
    return ("skipped", skipped)


def execute_plan(plan, cfg=None, workers=1):
    """
    Runs every job of a plan.

    Parameters
    ----------
    plan : DatasetPlan
    cfg : SamplerConfig or None, optional
    workers : int, optional
        Worker processes. The output does not depend on it.

    Returns
    -------
    PlanExecution
        Accepted defects and skipped jobs, both in plan order.
    """
    cfg = SamplerConfig() if cfg is None else cfg
    items = [(plan.layouts[job.layout_id], job, cfg) for job in plan.jobs]
    accepted, skipped = [], []
    for outcome in ordered_parallel_map(run_job, items, workers=workers):
        if outcome[0] == "ok":
            accepted.append((outcome[1], outcome[2]))
        else:
            skipped.append(outcome[1])
            logger.warning(
                "skipped %s: %s", outcome[1].defect_id, outcome[1].error["detail"]
            )
    if skipped:
        warnings.warn(
            f"{len(skipped)} of {len(plan.jobs)} defect jobs were skipped; "
            "see the skip report"
        )
    logger.info("accepted %d defects, skipped %d", len(accepted), len(skipped))
    return PlanExecution(accepted=accepted, skipped=skipped)


def with_rendered_class(record, rendered_class):
    """Copy of `record` carrying the class re-checked on rendered images."""
    return replace(record, rendered_class=DefectClass(rendered_class))


def with_necking_width(record, necking_width):
    """Copy of `record` carrying the narrowest printed width near the defect."""
    return replace(record, necking_width=None if necking_width is None else float(necking_width))


# records file


def write_records(path, records):
    """Writes records as JSON lines, one canonical object per line."""
    try:
        with open(path, "w") as handle:
            for record in records:
                handle.write(canonical_json(record.to_dict()) + "\n")
    except OSError as err:
        raise DatasetIOError(f"cannot write {path}: {err}") from err


def read_records(path):
    """
    Reads a records file written by :func:`write_records`.

    Raises
    ------
    DatasetIOError
        If the file cannot be read or a line is not a valid record.
    """
    records = []
    try:
        with open(path) as handle:
            for line_number, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                try:
                    records.append(DefectRecord.from_dict(json.loads(line)))
                except (ValueError, KeyError, TypeError) as err:
                    raise DatasetIOError(
                        f"{path}:{line_number}: {err}", path=str(path), line=line_number
                    ) from err
    except OSError as err:
        raise DatasetIOError(f"cannot read {path}: {err}") from err
    return records


def write_skip_report(path, skipped):
    """Writes skipped jobs as JSON lines."""
    with open(path, "w") as handle:
        for job in skipped:
            entry = {
                "defect_id": job.defect_id,
                "layout_id": job.layout_id,
                "group": job.group.value,
                "seed": job.seed,
                "error": job.error,
            }
            handle.write(canonical_json(entry) + "\n")
