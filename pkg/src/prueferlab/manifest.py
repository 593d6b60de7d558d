"""Experiment manifests: the TOML schema, validation, and run hashing.

A manifest is the complete, reproducible description of one experiment:
a SpectralConfig template plus the sweep axes each subcommand reads.
Hashing covers the experiment identity only, so execution details
(output directory, worker count) never change the hash and reruns can
be compared byte for byte.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Optional

try:
    import tomllib as tomli
except ImportError:  # python < 3.11
    import tomli

from .model import (
    ConfigError,
    ConstantCoupling,
    DecayingCoupling,
    EnergyPoint,
    ExponentialGaps,
    LinearEnvelope,
    PowerEnvelope,
    SpectralConfig,
    StretchedGaps,
)

__all__ = [
    "PreconditionError",
    "ExperimentManifest",
    "RunRecord",
    "load_manifest",
    "build_manifest",
    "manifest_hash",
]

SCHEMA_VERSION = 1


class PreconditionError(RuntimeError):
    """An operation precondition fails on otherwise well-formed input."""


def _check_keys(table: dict, allowed, where: str):
    extra = sorted(set(table) - set(allowed))
    if extra:
        raise ConfigError(f"unknown key(s) {extra} in [{where}]; allowed: {sorted(allowed)}")


def _require(table: dict, key: str, where: str):
    if key not in table:
        raise ConfigError(f"missing required key '{key}' in [{where}]")
    return table[key]


def _build_sparsity(table: dict):
    kind = _require(table, "kind", "config.sparsity")
    if kind == "exponential":
        _check_keys(table, {"kind", "beta"}, "config.sparsity")
        return ExponentialGaps(beta=int(_require(table, "beta", "config.sparsity")))
    if kind == "stretched":
        _check_keys(table, {"kind", "c", "gamma"}, "config.sparsity")
        return StretchedGaps(
            c=float(_require(table, "c", "config.sparsity")),
            gamma=float(_require(table, "gamma", "config.sparsity")),
        )
    raise ConfigError(f"unknown sparsity kind {kind!r}; use 'exponential' or 'stretched'")


def _build_disorder(table: dict):
    kind = table.get("kind", "linear")
    if kind == "linear":
        _check_keys(table, {"kind"}, "config.disorder")
        return LinearEnvelope()
    if kind == "power":
        _check_keys(table, {"kind", "epsilon"}, "config.disorder")
        return PowerEnvelope(epsilon=float(_require(table, "epsilon", "config.disorder")))
    raise ConfigError(f"unknown disorder kind {kind!r}; use 'linear' or 'power'")


def _build_coupling(table: dict):
    kind = _require(table, "kind", "config.coupling")
    if kind == "constant":
        _check_keys(table, {"kind", "p"}, "config.coupling")
        return ConstantCoupling(p=float(_require(table, "p", "config.coupling")))
    if kind == "decaying":
        _check_keys(table, {"kind", "c", "gamma", "c1", "delta"}, "config.coupling")
        return DecayingCoupling(
            c=float(_require(table, "c", "config.coupling")),
            gamma=float(_require(table, "gamma", "config.coupling")),
            c1=float(_require(table, "c1", "config.coupling")),
            delta=float(_require(table, "delta", "config.coupling")),
        )
    raise ConfigError(f"unknown coupling kind {kind!r}; use 'constant' or 'decaying'")


def _build_energy(table: dict) -> EnergyPoint:
    _check_keys(table, {"lambda", "pi_fraction"}, "config.energy")
    has_lam = "lambda" in table
    has_frac = "pi_fraction" in table
    if has_lam == has_frac:
        raise ConfigError("config.energy needs exactly one of 'lambda' or 'pi_fraction'")
    if has_lam:
        lam = float(table["lambda"])
        # band-edge points get Excluded rows in sweeps; as a single-point
        # energy they violate the operation's precondition instead
        if abs(lam) >= 2.0:
            raise PreconditionError(
                f"single-point energy {lam} is at or beyond the band edge |lambda| = 2"
            )
        return EnergyPoint.from_lambda(lam)
    frac = table["pi_fraction"]
    if not (isinstance(frac, list) and len(frac) == 2):
        raise ConfigError("pi_fraction must be a two-element list [numerator, denominator]")
    return EnergyPoint.from_pi_fraction(int(frac[0]), int(frac[1]))


def _grid_values(spec, name: str, lo: float, hi: float, open_ends: bool):
    """A grid axis is an explicit list or an inclusive {start, stop, count}."""
    if isinstance(spec, dict):
        _check_keys(spec, {"start", "stop", "count"}, name)
        start = float(_require(spec, "start", name))
        stop = float(_require(spec, "stop", name))
        count = int(_require(spec, "count", name))
        if count < 1:
            raise ConfigError(f"{name}.count must be >= 1, got {count}")
        if count == 1:
            values = [start]
        else:
            step = (stop - start) / (count - 1)
            values = [start + k * step for k in range(count)]
    elif isinstance(spec, list) and spec:
        values = [float(v) for v in spec]
    else:
        raise ConfigError(f"{name} must be a nonempty list or a {{start, stop, count}} table")
    for v in values:
        inside = lo < v < hi if open_ends else lo <= v <= hi
        if not inside:
            bounds = f"({lo}, {hi})" if open_ends else f"[{lo}, {hi}]"
            raise ConfigError(f"{name} value {v} outside {bounds}")
    return tuple(values)


@dataclass(frozen=True)
class ExperimentManifest:
    """Parsed manifest: config template, sweep axes, execution knobs."""

    schema_version: int
    seed: int
    workers: int
    out_dir: Optional[str]
    config: SpectralConfig
    raw: dict = field(repr=False)

    @property
    def manifest_hash(self) -> str:
        return manifest_hash(self.raw)

    def phase_grid(self):
        """(lambda values, p values, beta values) for the phase sweep."""
        table = self.raw.get("phase_diagram")
        if table is None:
            raise ConfigError("manifest has no [phase_diagram] section")
        _check_keys(table, {"lambda_grid", "p_grid", "beta_list"}, "phase_diagram")
        lambdas = _grid_values(
            _require(table, "lambda_grid", "phase_diagram"),
            "phase_diagram.lambda_grid", -2.0, 2.0, open_ends=False,
        )
        ps = _grid_values(
            _require(table, "p_grid", "phase_diagram"),
            "phase_diagram.p_grid", 0.0, 1.0, open_ends=True,
        )
        betas = table.get("beta_list", [2])
        if not (isinstance(betas, list) and betas):
            raise ConfigError("phase_diagram.beta_list must be a nonempty list")
        betas = tuple(int(b) for b in betas)
        if any(b < 2 for b in betas):
            raise ConfigError(f"beta_list entries must be >= 2, got {list(betas)}")
        return lambdas, ps, betas

    def equidist_params(self):
        """(ensemble_size, h_list, n_list, rational_control EnergyPoint or None)."""
        table = self.raw.get("equidist")
        if table is None:
            raise ConfigError("manifest has no [equidist] section")
        _check_keys(
            table,
            {"ensemble_size", "h_list", "lengths", "rational_control"},
            "equidist",
        )
        ensemble = int(_require(table, "ensemble_size", "equidist"))
        h_list = tuple(int(h) for h in table.get("h_list", (1, 2, 3, 5, 8)))
        lengths = table.get("lengths")
        n_list = tuple(int(n) for n in lengths) if lengths is not None else None
        control = None
        if "rational_control" in table:
            frac = table["rational_control"]
            if not (isinstance(frac, list) and len(frac) == 2):
                raise ConfigError(
                    "equidist.rational_control must be [numerator, denominator]"
                )
            control = EnergyPoint.from_pi_fraction(int(frac[0]), int(frac[1]))
        return ensemble, h_list, n_list, control

    def regime_params(self):
        """(gamma values, stretching constant c, measured diagnostics depth)."""
        table = self.raw.get("regimes")
        if table is None:
            raise ConfigError("manifest has no [regimes] section")
        _check_keys(table, {"gamma_list", "c", "measured_depth"}, "regimes")
        gammas = table.get("gamma_list")
        if not (isinstance(gammas, list) and gammas):
            raise ConfigError("regimes.gamma_list must be a nonempty list")
        gammas = tuple(float(g) for g in gammas)
        if "c" in table:
            c = float(table["c"])
        elif isinstance(self.config.sparsity, StretchedGaps):
            c = self.config.sparsity.c
        else:
            raise ConfigError(
                "regimes needs a stretching constant: set regimes.c or use stretched sparsity"
            )
        depth = int(table.get("measured_depth", min(self.config.depth, 48)))
        if depth < 1:
            raise ConfigError(f"regimes.measured_depth must be >= 1, got {depth}")
        return gammas, c, depth


@dataclass(frozen=True)
class RunRecord:
    """What one command run produced.

    wall_time_s is in-memory telemetry only; serialization drops it so
    rerunning a manifest yields byte-identical files.
    """

    manifest_hash: str
    seed: int
    command: str
    files: tuple
    min_certified_bits: Optional[int]
    wall_time_s: float = 0.0

    def to_json_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "manifest_hash": self.manifest_hash,
            "seed": self.seed,
            "command": self.command,
            "min_certified_bits": self.min_certified_bits,
            "files": list(self.files),
        }


_TOP_KEYS = {
    "schema_version", "seed", "out_dir", "workers",
    "config", "phase_diagram", "equidist", "regimes",
}
_CONFIG_KEYS = {
    "depth", "boundary_phase", "precision_bits",
    "energy", "sparsity", "disorder", "coupling",
}


def load_manifest(path: str) -> dict:
    """Read and parse a TOML manifest file."""
    try:
        with open(path, "rb") as fh:
            return tomli.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"manifest file not found: {path}")
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"manifest is not valid TOML: {exc}")


def build_manifest(
    data: dict,
    seed_override: Optional[int] = None,
    workers_override: Optional[int] = None,
    out_override: Optional[str] = None,
) -> ExperimentManifest:
    """Validate a parsed manifest and apply command-line overrides."""
    if not isinstance(data, dict):
        raise ConfigError("manifest root must be a table")
    _check_keys(data, _TOP_KEYS, "manifest")

    version = int(data.get("schema_version", SCHEMA_VERSION))
    if version != SCHEMA_VERSION:
        raise ConfigError(
            f"unsupported schema_version {version}; this build reads {SCHEMA_VERSION}"
        )

    seed = seed_override if seed_override is not None else data.get("seed")
    if seed is None:
        raise ConfigError("manifest needs a 'seed' (or pass --seed)")
    seed = int(seed)

    workers = workers_override if workers_override is not None else data.get("workers", 1)
    workers = int(workers)
    if workers < 1:
        raise ConfigError(f"workers must be >= 1, got {workers}")

    out_dir = out_override if out_override is not None else data.get("out_dir")

    cfg_table = data.get("config")
    if not isinstance(cfg_table, dict):
        raise ConfigError("manifest needs a [config] table")
    _check_keys(cfg_table, _CONFIG_KEYS, "config")
    depth = int(_require(cfg_table, "depth", "config"))
    boundary = float(cfg_table.get("boundary_phase", 0.0))
    precision = cfg_table.get("precision_bits")
    precision = int(precision) if precision is not None else None

    config = SpectralConfig(
        sparsity=_build_sparsity(dict(_require(cfg_table, "sparsity", "config"))),
        disorder=_build_disorder(dict(cfg_table.get("disorder", {}))),
        coupling=_build_coupling(dict(_require(cfg_table, "coupling", "config"))),
        energy=_build_energy(dict(_require(cfg_table, "energy", "config"))),
        depth=depth,
        seed=seed,
        boundary_phase=boundary,
        precision_bits=precision,
    )

    raw = json.loads(json.dumps(data))  # deep copy with JSON-clean leaves
    raw["schema_version"] = version
    raw["seed"] = seed
    raw.pop("out_dir", None)
    raw.pop("workers", None)
    return ExperimentManifest(
        schema_version=version,
        seed=seed,
        workers=workers,
        out_dir=out_dir,
        config=config,
        raw=raw,
    )


def manifest_hash(raw: dict) -> str:
    """sha256 of the canonical JSON form of the experiment identity."""
    canon = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("ascii")).hexdigest()
