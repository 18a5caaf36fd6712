"""Configuration files, tabular data ingestion, and result emission.

The run configuration is a flat INI-style file: typed key-value pairs under
section headers, one section per concern. Unknown sections or keys are
rejected outright, and everything is validated against the library's own
constructors before any command does work. Output files carry the config
hash and tool version in a comment header (JSON documents carry them as
fields) and are written atomically via a temporary file and rename, so a
crash can never leave a partial artifact. No output contains a timestamp:
the same config yields byte-identical files.
"""

from __future__ import annotations

import configparser
import csv
import hashlib
import io
import json
import logging
import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

from ._version import __version__
from .basis import (
    GammaSeed,
    GaussianSeed,
    InverseGaussianSeed,
    LevySeed,
    NegativeBinomialSeed,
    PoissonSeed,
)
from .errors import (
    ConfigError,
    InconsistentCoordinates,
    ParseError,
    SchemaError,
)
from .inference import Dataset, FitOptions, FitResult, ModelSpec
from .kernels import (
    Anisotropy,
    CylinderHeight,
    GaussianHeight,
    HalfBallHeight,
    HeightFunction,
    LaplaceHeight,
    SlashHeight,
    StudentTHeight,
)
from .simulate import FieldSample, SimulationConfig, SiteSet

__all__ = [
    "DatasetSchema",
    "RunConfig",
    "load_config",
    "load_dataset",
    "load_sites",
    "write_field_sample",
    "write_table",
    "write_text",
    "write_json_document",
    "fit_result_payload",
    "fit_result_table",
]

_log = logging.getLogger(__name__)

_SEED_FAMILIES = {
    "gamma": (GammaSeed, ("shape", "rate")),
    "inverse_gaussian": (InverseGaussianSeed, ("shape_coef", "mean_coef")),
    "negative_binomial": (NegativeBinomialSeed, ("mean", "overdispersion")),
    "poisson": (PoissonSeed, ("intensity",)),
    "gaussian": (GaussianSeed, ("variance",)),
}

_KERNEL_FAMILIES = {
    "cylinder": (CylinderHeight, ("rho",)),
    "half_ball": (HalfBallHeight, ("rho",)),
    "gaussian": (GaussianHeight, ("rho",)),
    "student_t": (StudentTHeight, ("rho", "nu")),
    "laplace": (LaplaceHeight, ("rho",)),
    "slash": (SlashHeight, ("rho",)),
}

_FIT_KINDS = (
    "pairwise_continuous",
    "pairwise_discrete",
    "pairwise_difference",
    "independence",
)


@dataclass
class RunConfig:
    """Validated run description; see the README for the full grammar."""

    text: str
    seed: LevySeed | None = None
    kernel: HeightFunction | None = None
    nugget: float = 0.0
    aniso: Anisotropy | None = None
    fixed: tuple = ()
    rng_seed: int = 0
    input_path: str | None = None
    output_dir: str = "."
    # [simulate]
    sim: SimulationConfig | None = None
    sim_method: str = "grid"
    sites_path: str | None = None
    grid_shape: int | None = None
    grid_spacing: float = 1.0
    # [fit]
    fit_kind: str | None = None
    pair_cutoff: float | None = None
    fit_opts: FitOptions = field(default_factory=FitOptions)
    bootstrap_resamples: int = 200
    block_length: int = 1
    covariate_column: str | None = None
    # [covariance]
    cov_lag_max: float = 5.0
    cov_n_lags: int = 101
    # [tail]
    tail_lags: tuple = ()
    tail_quantiles: tuple = (0.9, 0.95, 0.99)
    tail_lag_tol: float | None = None

    def sha256(self) -> str:
        return hashlib.sha256(self.text.encode("utf-8")).hexdigest()

    def meta(self) -> dict:
        return {"config_sha256": self.sha256(), "version": __version__}

    def model_spec(self) -> ModelSpec:
        if self.seed is None or self.kernel is None:
            raise ConfigError("this command needs [seed] and [kernel] sections")
        return ModelSpec(
            seed=self.seed,
            kernel=self.kernel,
            nugget_weight=self.nugget,
            aniso=self.aniso,
            fixed=self.fixed,
        )


def _parse_value(section, key, raw, kind):
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "str":
            return raw.strip()
        if kind == "float_list":
            return tuple(float(p) for p in raw.split(",") if p.strip())
        if kind == "str_list":
            return tuple(p.strip() for p in raw.split(",") if p.strip())
    except ValueError:
        pass
    raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} as {kind}")


class _Section:
    """One config section with strict key checking and typed reads."""

    def __init__(self, name, items):
        self.name = name
        self.items = dict(items)
        self.seen = set()

    def get(self, key, kind, default=None, required=False):
        self.seen.add(key)
        if key not in self.items or not self.items[key].strip():
            if required:
                raise ConfigError(f"[{self.name}] missing required key {key!r}")
            return default
        return _parse_value(self.name, key, self.items[key], kind)

    def finish(self):
        unknown = set(self.items) - self.seen
        if unknown:
            raise ConfigError(
                f"[{self.name}] unknown key(s): {', '.join(sorted(unknown))}"
            )


def _build_seed(sec: _Section) -> LevySeed:
    family = sec.get("family", "str", required=True).lower()
    if family not in _SEED_FAMILIES:
        raise ConfigError(
            f"[seed] unknown family {family!r}; "
            f"choose from {', '.join(sorted(_SEED_FAMILIES))}"
        )
    cls, params = _SEED_FAMILIES[family]
    kwargs = {p: sec.get(p, "float", required=True) for p in params}
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"[seed] {exc}") from exc


def _build_kernel(sec: _Section) -> HeightFunction:
    family = sec.get("family", "str", required=True).lower()
    if family not in _KERNEL_FAMILIES:
        raise ConfigError(
            f"[kernel] unknown family {family!r}; "
            f"choose from {', '.join(sorted(_KERNEL_FAMILIES))}"
        )
    cls, params = _KERNEL_FAMILIES[family]
    kwargs = {p: sec.get(p, "float", required=True) for p in params}
    kwargs["dimension"] = sec.get("dimension", "int", default=2)
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise ConfigError(f"[kernel] {exc}") from exc


def load_config(path) -> RunConfig:
    """Parse and fully validate a run configuration file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file: {exc}") from exc

    known_sections = {"seed", "kernel", "model", "simulate", "fit", "covariance", "tail", "run"}
    unknown = set(parser.sections()) - known_sections
    if unknown:
        raise ConfigError(f"unknown section(s): {', '.join(sorted(unknown))}")

    cfg = RunConfig(text=text)

    if parser.has_section("run"):
        sec = _Section("run", parser.items("run"))
        cfg.rng_seed = sec.get("rng_seed", "int", default=0)
        cfg.input_path = sec.get("input", "str")
        cfg.output_dir = sec.get("output_dir", "str", default=".")
        sec.finish()

    if parser.has_section("seed"):
        sec = _Section("seed", parser.items("seed"))
        cfg.seed = _build_seed(sec)
        sec.finish()

    if parser.has_section("kernel"):
        sec = _Section("kernel", parser.items("kernel"))
        cfg.kernel = _build_kernel(sec)
        sec.finish()

    if parser.has_section("model"):
        sec = _Section("model", parser.items("model"))
        cfg.nugget = sec.get("nugget", "float", default=0.0)
        angle = sec.get("aniso_angle", "float")
        stretch = sec.get("aniso_stretch", "float")
        cfg.fixed = sec.get("fixed", "str_list", default=())
        sec.finish()
        if (angle is None) != (stretch is None):
            raise ConfigError(
                "[model] aniso_angle and aniso_stretch must be given together"
            )
        if angle is not None:
            try:
                cfg.aniso = Anisotropy(angle=angle, stretch=stretch)
            except ValueError as exc:
                raise ConfigError(f"[model] {exc}") from exc

    if parser.has_section("simulate"):
        sec = _Section("simulate", parser.items("simulate"))
        n_rep = sec.get("n_replicates", "int", default=1)
        method = sec.get("method", "str", default="grid").lower()
        if method not in ("grid", "cavalieri"):
            raise ConfigError(f"[simulate] unknown method {method!r}")
        cfg.sim_method = method
        cfg.sites_path = sec.get("sites", "str")
        cfg.grid_shape = sec.get("grid_shape", "int")
        cfg.grid_spacing = sec.get("grid_spacing", "float", default=1.0)
        kwargs = dict(
            rng_seed=cfg.rng_seed,
            n_replicates=n_rep,
            grid_cell=sec.get("grid_cell", "float"),
            height_cell=sec.get("height_cell", "float"),
            tail_mass_eps=sec.get("tail_mass_eps", "float", default=1e-3),
            cavalieri_layers=sec.get("cavalieri_layers", "int", default=64),
            cell_budget=sec.get("cell_budget", "int", default=250_000_000),
        )
        sec.finish()
        if (cfg.sites_path is None) == (cfg.grid_shape is None):
            raise ConfigError(
                "[simulate] give exactly one of sites = <csv> or grid_shape = <n>"
            )
        if cfg.grid_shape is not None and cfg.grid_shape < 1:
            raise ConfigError("[simulate] grid_shape must be >= 1")
        if cfg.grid_spacing <= 0:
            raise ConfigError("[simulate] grid_spacing must be positive")
        try:
            cfg.sim = SimulationConfig(**kwargs)
        except ValueError as exc:
            raise ConfigError(f"[simulate] {exc}") from exc

    if parser.has_section("fit"):
        sec = _Section("fit", parser.items("fit"))
        kind = sec.get("kind", "str")
        if kind is not None:
            kind = kind.lower()
            if kind not in _FIT_KINDS:
                raise ConfigError(
                    f"[fit] unknown kind {kind!r}; choose from {', '.join(_FIT_KINDS)}"
                )
        cfg.fit_kind = kind
        cfg.pair_cutoff = sec.get("pair_cutoff", "float")
        n_starts = sec.get("n_starts", "int", default=5)
        max_evals = sec.get("max_evals", "int", default=2000)
        tol = sec.get("tol", "float", default=1e-6)
        cfg.bootstrap_resamples = sec.get("bootstrap_resamples", "int", default=200)
        cfg.block_length = sec.get("block_length", "int", default=1)
        cfg.covariate_column = sec.get("covariate", "str")
        sec.finish()
        if n_starts < 1 or max_evals < 1 or tol <= 0:
            raise ConfigError("[fit] n_starts, max_evals must be >= 1 and tol > 0")
        if cfg.pair_cutoff is not None and cfg.pair_cutoff <= 0:
            raise ConfigError("[fit] pair_cutoff must be positive")
        if cfg.block_length < 1:
            raise ConfigError("[fit] block_length must be >= 1")
        if cfg.bootstrap_resamples < 50:
            raise ConfigError("[fit] bootstrap_resamples must be >= 50")
        cfg.fit_opts = FitOptions(
            n_starts=n_starts, max_evals=max_evals, tol=tol, rng_seed=cfg.rng_seed
        )

    if parser.has_section("covariance"):
        sec = _Section("covariance", parser.items("covariance"))
        cfg.cov_lag_max = sec.get("lag_max", "float", default=5.0)
        cfg.cov_n_lags = sec.get("n_lags", "int", default=101)
        sec.finish()
        if cfg.cov_lag_max <= 0 or cfg.cov_n_lags < 2:
            raise ConfigError("[covariance] lag_max must be > 0 and n_lags >= 2")

    if parser.has_section("tail"):
        sec = _Section("tail", parser.items("tail"))
        cfg.tail_lags = sec.get("lags", "float_list", default=())
        cfg.tail_quantiles = sec.get(
            "quantiles", "float_list", default=(0.9, 0.95, 0.99)
        )
        cfg.tail_lag_tol = sec.get("lag_tol", "float")
        sec.finish()
        if any(u < 0 for u in cfg.tail_lags):
            raise ConfigError("[tail] lags must be nonnegative")
        if any(not 0.5 < q < 1 for q in cfg.tail_quantiles):
            raise ConfigError("[tail] quantiles must lie in (0.5, 1)")
        if cfg.tail_lag_tol is not None and cfg.tail_lag_tol < 0:
            raise ConfigError("[tail] lag_tol must be nonnegative")

    # rebuild fit options if [run] followed [fit] in the file
    if cfg.fit_opts.rng_seed != cfg.rng_seed:
        cfg.fit_opts = FitOptions(
            n_starts=cfg.fit_opts.n_starts,
            max_evals=cfg.fit_opts.max_evals,
            tol=cfg.fit_opts.tol,
            rng_seed=cfg.rng_seed,
        )
    if cfg.sim is not None and cfg.sim.rng_seed != cfg.rng_seed:
        cfg.sim = SimulationConfig(
            rng_seed=cfg.rng_seed,
            n_replicates=cfg.sim.n_replicates,
            grid_cell=cfg.sim.grid_cell,
            height_cell=cfg.sim.height_cell,
            tail_mass_eps=cfg.sim.tail_mass_eps,
            cavalieri_layers=cfg.sim.cavalieri_layers,
            cell_budget=cfg.sim.cell_budget,
        )

    # validate the model combination as a whole when both halves exist
    if cfg.seed is not None and cfg.kernel is not None:
        try:
            cfg.model_spec()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    return cfg


# ---------------------------------------------------------------------------
# dataset ingestion


@dataclass(frozen=True)
class DatasetSchema:
    """Column names expected in observation tables."""

    site_id: str = "site_id"
    x: str = "x"
    y: str = "y"
    value: str = "value"
    replicate: str = "replicate"
    time: str = "t"
    covariate: str | None = None


def _iter_csv_rows(path):
    """Yield (line_number, fields) skipping blanks and comment lines."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        for lineno, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            yield lineno, next(csv.reader(io.StringIO(line)))


def _header_index(header, schema: DatasetSchema, needed):
    pos = {name.strip(): k for k, name in enumerate(header)}
    for col in needed:
        if col not in pos:
            raise SchemaError(f"missing required column {col!r}")
    return pos


def load_sites(path) -> SiteSet:
    """Read a site table: columns site_id, x, y and optional t."""
    rows = _iter_csv_rows(path)
    try:
        _, header = next(rows)
    except StopIteration:
        raise SchemaError(f"{path}: empty site file") from None
    pos = _header_index(header, DatasetSchema(), ("site_id", "x", "y"))
    has_t = "t" in pos
    ids, coords, times = [], [], []
    seen = {}
    for lineno, fields in rows:
        if len(fields) != len(header):
            raise ParseError(
                f"expected {len(header)} fields, got {len(fields)}", lineno
            )
        sid = fields[pos["site_id"]].strip()
        try:
            xy = (float(fields[pos["x"]]), float(fields[pos["y"]]))
            t = float(fields[pos["t"]]) if has_t else None
        except ValueError:
            raise ParseError("non-numeric coordinate", lineno) from None
        if sid in seen:
            if seen[sid] != (xy, t):
                raise InconsistentCoordinates(
                    f"site {sid!r} appears with different coordinates"
                )
            continue
        seen[sid] = (xy, t)
        ids.append(sid)
        coords.append(xy)
        times.append(t)
    if not ids:
        raise SchemaError(f"{path}: no site rows")
    return SiteSet(
        np.array(coords),
        times=np.array(times) if has_t else None,
        site_ids=tuple(ids),
    )


def load_dataset(path, schema: DatasetSchema | None = None) -> Dataset:
    """Read an observation table into a replicate-by-site matrix.

    Required columns: site_id, x, y, value. Optional: replicate (defaults
    to a single replicate), t (a per-site time, must be consistent), and a
    covariate column named by the schema. Sites are keyed by site_id in
    order of first appearance; the same id must always carry the same
    coordinates. Every (replicate, site) cell must be present exactly once.
    """
    schema = schema or DatasetSchema()
    rows = _iter_csv_rows(path)
    try:
        _, header = next(rows)
    except StopIteration:
        raise SchemaError(f"{path}: empty data file") from None
    needed = (schema.site_id, schema.x, schema.y, schema.value)
    pos = _header_index(header, schema, needed)
    if schema.covariate is not None and schema.covariate not in pos:
        raise SchemaError(f"missing covariate column {schema.covariate!r}")
    has_rep = schema.replicate in pos
    has_t = schema.time in pos

    site_index = {}
    coords, times, covs, ids = [], [], [], []
    cells = {}
    n_rows = 0
    for lineno, fields in rows:
        if len(fields) != len(header):
            raise ParseError(
                f"expected {len(header)} fields, got {len(fields)}", lineno
            )
        sid = fields[pos[schema.site_id]].strip()
        try:
            x = float(fields[pos[schema.x]])
            y = float(fields[pos[schema.y]])
            value = float(fields[pos[schema.value]])
            t = float(fields[pos[schema.time]]) if has_t else None
            cov = (
                float(fields[pos[schema.covariate]])
                if schema.covariate is not None
                else None
            )
            rep = int(fields[pos[schema.replicate]]) if has_rep else 1
        except ValueError:
            raise ParseError("non-numeric field", lineno) from None
        if sid not in site_index:
            site_index[sid] = len(ids)
            ids.append(sid)
            coords.append((x, y))
            times.append(t)
            covs.append(cov)
        else:
            k = site_index[sid]
            if coords[k] != (x, y) or times[k] != t or covs[k] != cov:
                raise InconsistentCoordinates(
                    f"site {sid!r} appears with different coordinates "
                    f"(line {lineno})"
                )
        key = (rep, site_index[sid])
        if key in cells:
            raise ParseError(
                f"duplicate cell for replicate {rep}, site {sid!r}", lineno
            )
        cells[key] = value
        n_rows += 1
    if not cells:
        raise SchemaError(f"{path}: no data rows")

    reps = sorted({r for r, _ in cells})
    n_sites = len(ids)
    values = np.empty((len(reps), n_sites))
    missing = []
    for a, rep in enumerate(reps):
        for s in range(n_sites):
            if (rep, s) not in cells:
                missing.append((rep, ids[s]))
            else:
                values[a, s] = cells[(rep, s)]
    if missing:
        preview = ", ".join(f"(replicate {r}, site {s})" for r, s in missing[:5])
        raise SchemaError(
            f"{len(missing)} missing cell(s), e.g. {preview}; every replicate "
            "must cover every site"
        )
    _log.info("loaded %d rows: %d replicates x %d sites", n_rows, len(reps), n_sites)
    sites = SiteSet(
        np.array(coords),
        times=np.array(times, dtype=float) if has_t else None,
        site_ids=tuple(ids),
    )
    covariate = (
        np.array(covs, dtype=float) if schema.covariate is not None else None
    )
    return Dataset(sites=sites, values=values, covariate=covariate)


# ---------------------------------------------------------------------------
# output emission


def _atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp_", suffix="~")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _meta_lines(meta):
    return "".join(f"# {k}={meta[k]}\n" for k in sorted(meta))


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_table(path, columns, rows, meta):
    """CSV with a comment header carrying the config hash and version."""
    buf = [_meta_lines(meta), ",".join(columns), "\n"]
    for row in rows:
        buf.append(",".join(_fmt(v) for v in row))
        buf.append("\n")
    _atomic_write(path, "".join(buf))


def write_text(path, text):
    """Atomic plain-text write (used for human-readable summaries)."""
    _atomic_write(path, text)


def write_json_document(path, payload, meta):
    doc = dict(payload)
    doc.update(meta)
    _atomic_write(path, json.dumps(doc, sort_keys=True, indent=2) + "\n")


def write_field_sample(path, sample: FieldSample, meta):
    """Emit simulated values as replicate, site_id, x, y[, t], value rows.

    Round trip: loading the file back reproduces the value matrix bit for
    bit (floats are written in shortest round-trip form).
    """
    coords = sample.coords
    if coords.shape[1] != 2:
        raise ValueError("field output is defined for planar sites")
    ids = sample.sites.site_ids or tuple(
        f"s{k:05d}" for k in range(coords.shape[0])
    )
    values = sample.values
    columns = ["replicate", "site_id", "x", "y"]
    has_t = values.ndim == 3 or sample.sites.times is not None
    if has_t:
        columns.append("t")
    columns.append("value")
    rows = []
    if values.ndim == 3:
        tgrid = sample.times
        for r in range(values.shape[0]):
            for s in range(values.shape[1]):
                for a, t in enumerate(tgrid):
                    rows.append(
                        (
                            r + 1,
                            ids[s],
                            coords[s, 0],
                            coords[s, 1],
                            float(t),
                            float(values[r, s, a]),
                        )
                    )
    else:
        site_t = sample.sites.times
        for r in range(values.shape[0]):
            for s in range(values.shape[1]):
                row = [r + 1, ids[s], coords[s, 0], coords[s, 1]]
                if has_t:
                    row.append(float(site_t[s]))
                row.append(float(values[r, s]))
                rows.append(tuple(row))
    write_table(path, columns, rows, meta)


def fit_result_payload(result: FitResult) -> dict:
    """JSON-ready description of a fit, versioned for forward compatibility."""
    return {
        "schema_version": 1,
        "kind": result.kind,
        "loglik": result.loglik,
        "converged": result.converged,
        "n_evaluations": result.n_evaluations,
        "simplex_diameter": result.simplex_diameter,
        "estimates": {k: float(v) for k, v in result.estimates.items()},
        "std_errs": (
            {k: float(v) for k, v in result.std_errs.items()}
            if result.std_errs is not None
            else None
        ),
        "clic": result.clic,
        "notes": list(result.notes),
    }


def fit_result_table(result: FitResult, meta) -> str:
    """Human-readable summary: estimates, errors in parentheses, CLIC."""
    lines = [_meta_lines(meta)]
    lines.append(f"likelihood kind : {result.kind}\n")
    lines.append(f"max log-PL      : {result.loglik:.6f}\n")
    state = "yes" if result.converged else "no"
    lines.append(f"converged       : {state} ({result.n_evaluations} evaluations)\n")
    lines.append("\n")
    lines.append(f"{'parameter':<18}{'estimate':>14}  {'std. error':>12}\n")
    for name, value in result.estimates.items():
        se = ""
        if result.std_errs is not None and name in result.std_errs:
            se = f"({result.std_errs[name]:.4g})"
        lines.append(f"{name:<18}{value:>14.6f}  {se:>12}\n")
    if result.clic is not None:
        lines.append("\n")
        lines.append(f"CLIC            : {result.clic:.4f}\n")
    for note in result.notes:
        lines.append(f"note: {note}\n")
    return "".join(lines)
