"""Command-line entry points.

Every subcommand takes a single --config file and is fully deterministic
given its contents (including the rng seed): running twice produces
byte-identical artifacts. Exit codes: 0 success, 2 configuration problem,
3 input-data problem, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import tail as tail_mod
from .data_io import (
    DatasetSchema,
    RunConfig,
    fit_result_payload,
    fit_result_table,
    load_config,
    load_dataset,
    load_sites,
    write_field_sample,
    write_json_document,
    write_table,
    write_text,
)
from .errors import (
    AllStartsFailed,
    BudgetExceeded,
    ConfigError,
    DegenerateTail,
    DivergentMoment,
    InconsistentCoordinates,
    NonConvergence,
    OutOfSupport,
    ParseError,
    SchemaError,
    SingularHessian,
)
from .inference import block_bootstrap, fit
from .kernels import MixtureHeight, NuggetHeight, PairGeometry
from .simulate import SiteSet, simulate_cavalieri, simulate_grid

__all__ = [
    "main",
    "cmd_simulate",
    "cmd_covariance",
    "cmd_tail",
    "cmd_fit",
    "cmd_bootstrap",
]

_DATA_ERRORS = (SchemaError, InconsistentCoordinates, ParseError, FileNotFoundError)
_NUMERIC_ERRORS = (
    NonConvergence,
    AllStartsFailed,
    BudgetExceeded,
    DivergentMoment,
    DegenerateTail,
    SingularHessian,
    OutOfSupport,
)


def _out(config: RunConfig, name: str) -> str:
    return os.path.join(config.output_dir, name)


def _simulation_sites(config: RunConfig) -> SiteSet:
    if config.sites_path is not None:
        return load_sites(config.sites_path)
    n = config.grid_shape
    h = config.grid_spacing
    axis = np.arange(n) * h
    xx, yy = np.meshgrid(axis, axis, indexing="ij")
    coords = np.column_stack([xx.ravel(), yy.ravel()])
    ids = tuple(f"r{a // n:03d}c{a % n:03d}" for a in range(n * n))
    return SiteSet(coords, site_ids=ids)


def _simulation_kernel(config: RunConfig):
    """Fold a configured nugget into the kernel as a mixture.

    The engine's site-local compensation then supplies the nugget mass, so
    margins stay exact while the correlation is scaled by 1 - w.
    """
    kernel = config.kernel
    w = config.nugget
    if w <= 0:
        return kernel
    if w >= 1:
        return NuggetHeight(dimension=kernel.dimension)
    return MixtureHeight(
        [(w, NuggetHeight(dimension=kernel.dimension)), (1.0 - w, kernel)]
    )


def cmd_simulate(config: RunConfig) -> int:
    """Simulate field replicates and write them as a value table."""
    if config.seed is None or config.kernel is None or config.sim is None:
        raise ConfigError("simulate needs [seed], [kernel], and [simulate] sections")
    sites = _simulation_sites(config)
    kernel = _simulation_kernel(config)
    if config.sim_method == "cavalieri":
        if kernel.is_nugget:
            raise ConfigError("cavalieri stacking cannot simulate a pure nugget")
        if kernel.dimension != 2:
            raise ConfigError("cavalieri stacking needs a planar kernel")
        sample = simulate_cavalieri(config.seed, kernel, sites, config.sim)
    else:
        sample = simulate_grid(
            config.seed, kernel, sites, config.sim, aniso=config.aniso
        )
    write_field_sample(_out(config, "field.csv"), sample, config.meta())
    return 0


def cmd_covariance(config: RunConfig) -> int:
    """Tabulate the model correlation function on a lag grid."""
    if config.kernel is None:
        raise ConfigError("covariance needs a [kernel] section")
    lags = np.linspace(0.0, config.cov_lag_max, config.cov_n_lags)
    base = np.asarray(config.kernel.correlation(lags), dtype=float)
    w = config.nugget
    corr = np.where(lags == 0.0, 1.0, (1.0 - w) * base)
    rows = [(float(u), float(c)) for u, c in zip(lags, corr)]
    write_table(
        _out(config, "covariance.csv"), ("lag", "correlation"), rows, config.meta()
    )
    return 0


def cmd_tail(config: RunConfig) -> int:
    """Write theoretical tail-dependence summaries and, with input data,
    empirical counterparts at the configured lags and quantiles."""
    if config.seed is None or config.kernel is None:
        raise ConfigError("tail needs [seed] and [kernel] sections")
    if not config.tail_lags:
        raise ConfigError("tail needs [tail] lags = u1, u2, ...")
    try:
        tc = tail_mod.tail_class(config.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    w = config.nugget
    rows = []
    for u in config.tail_lags:
        if u == 0.0:
            shared = 1.0
        else:
            shared = float(config.kernel.correlation(u)) * (1.0 - w)
        geom = PairGeometry(total=1.0, shared=shared, residual=1.0 - shared)
        s = tail_mod.theoretical_chi(tc, geom)
        rows.append((float(u), s.chi, s.chibar, s.eta))
    write_table(
        _out(config, "tail_theoretical.csv"),
        ("lag", "chi", "chibar", "eta"),
        rows,
        config.meta(),
    )

    if config.input_path is None:
        return 0
    data = load_dataset(config.input_path, DatasetSchema())
    coords = data.sites.coords
    i_idx, j_idx = np.triu_indices(coords.shape[0], k=1)
    dists = np.linalg.norm(coords[i_idx] - coords[j_idx], axis=1)
    tol = config.tail_lag_tol
    if tol is None:
        tol = 0.05 * max(float(dists.max()), 1e-12)
    emp_rows = []
    for u in config.tail_lags:
        sel = np.abs(dists - u) <= tol
        cols1, cols2 = i_idx[sel], j_idx[sel]
        pairs = np.column_stack(
            [data.values[:, cols1].ravel(), data.values[:, cols2].ravel()]
        )
        for q in config.tail_quantiles:
            if pairs.shape[0] < 2:
                emp_rows.append(
                    (float(u), float(q), 0, float("nan"), float("nan"),
                     float("nan"), float("nan"))
                )
                continue
            try:
                chi_hat, chibar_hat, (se_chi, se_chibar) = tail_mod.empirical_chi(
                    pairs, q
                )
            except DegenerateTail:
                chi_hat = chibar_hat = se_chi = se_chibar = float("nan")
            emp_rows.append(
                (
                    float(u),
                    float(q),
                    int(pairs.shape[0]),
                    float(chi_hat),
                    float(chibar_hat),
                    float(se_chi),
                    float(se_chibar),
                )
            )
    write_table(
        _out(config, "tail_empirical.csv"),
        ("lag", "quantile", "n_pairs", "chi", "chibar", "se_chi", "se_chibar"),
        emp_rows,
        config.meta(),
    )
    return 0


def _load_fit_inputs(config: RunConfig):
    if config.input_path is None:
        raise ConfigError("fit needs [run] input = <data csv>")
    if config.fit_kind is None:
        raise ConfigError("fit needs [fit] kind = <likelihood kind>")
    model = config.model_spec()
    schema = DatasetSchema(covariate=config.covariate_column)
    data = load_dataset(config.input_path, schema)
    return model, data


def cmd_fit(config: RunConfig) -> int:
    """Fit the configured model and write the result as JSON plus a table."""
    model, data = _load_fit_inputs(config)
    result = fit(model, data, config.fit_kind, config.pair_cutoff, config.fit_opts)
    meta = config.meta()
    write_json_document(_out(config, "fit.json"), fit_result_payload(result), meta)
    write_text(_out(config, "fit_table.txt"), fit_result_table(result, meta))
    return 0


def cmd_bootstrap(config: RunConfig) -> int:
    """Fit, bootstrap over replicate blocks, and write the augmented result."""
    model, data = _load_fit_inputs(config)
    base = fit(model, data, config.fit_kind, config.pair_cutoff, config.fit_opts)
    std_errs, clic = block_bootstrap(
        model,
        data,
        config.fit_kind,
        config.block_length,
        config.bootstrap_resamples,
        config.pair_cutoff,
        config.fit_opts,
        base_fit=base,
    )
    base.std_errs = std_errs
    base.clic = clic
    meta = config.meta()
    write_json_document(_out(config, "fit.json"), fit_result_payload(base), meta)
    write_text(_out(config, "fit_table.txt"), fit_result_table(base, meta))
    return 0


_DISPATCH = {
    "simulate": cmd_simulate,
    "covariance": cmd_covariance,
    "tail": cmd_tail,
    "fit": cmd_fit,
    "bootstrap": cmd_bootstrap,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="levyfield",
        description=(
            "Simulate, summarize, and fit spatial random fields driven by "
            "infinitely divisible bases"
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func in _DISPATCH.items():
        p = sub.add_parser(name, help=func.__doc__.splitlines()[0])
        p.add_argument("--config", required=True, help="run configuration file")
        p.add_argument(
            "--verbose", action="store_true", help="log progress to stderr"
        )
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = load_config(args.config)
        return _DISPATCH[args.command](config)
    except ConfigError as exc:
        print(f"error: config: {exc}", file=sys.stderr)
        return 2
    except _DATA_ERRORS as exc:
        detail = str(exc)
        if isinstance(exc, ParseError) and exc.line_number is not None:
            detail += f" (line {exc.line_number})"
        print(f"error: data: {detail}", file=sys.stderr)
        return 3
    except _NUMERIC_ERRORS as exc:
        print(f"error: numerical: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
