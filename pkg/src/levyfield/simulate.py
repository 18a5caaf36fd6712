"""Simulation of basis-convolution fields at arbitrary site sets.

Two interchangeable discretizations are provided:

- grid: the basis lives on a fine (d+1)-dimensional grid of cells over the
  padded site bounding box times the height axis; a cell belongs to a site's
  region when its center lies under the height surface shifted to that site.
- cavalieri: the height profile is sliced horizontally into a stack of discs
  with radii at equal-mass quantiles of the radial distribution; each slab
  is a planar basis smoothed with a disc indicator, using the slab height as
  exponent measure per unit area. Exact for the cylinder kernel at any
  number of layers.

Both paths reduce to one internal engine: group cells into atoms (maximal
cell unions covered by the same subset of sites), compute atom volumes once,
then draw an independent basis value per atom and replicate. Infinite
divisibility makes a single draw per atom exact, which is what keeps
many-replicate simulation cheap.

Mass removed by truncation (radial padding, the vertical cap for unbounded
profiles, quantization round-off, time-kernel tails) is restored through an
independent site-local draw of matching volume, so single-site margins stay
correct while the correlation error stays bounded by the truncated mass.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize as _optimize
from scipy import sparse as _sparse
from scipy import stats as _stats
from scipy.special import gammaln as _gammaln

from .basis import GammaSeed, LevySeed
from .errors import BudgetExceeded
from .kernels import Anisotropy, HeightFunction, transform_coordinates
from .numerics import integrate, QuadratureSpec

__all__ = [
    "SiteSet",
    "SimulationConfig",
    "FieldSample",
    "TimeKernel",
    "GeometricTimeKernel",
    "PoissonPMFTimeKernel",
    "ZipfTimeKernel",
    "TruncatedCustomTimeKernel",
    "simulate_grid",
    "simulate_cavalieri",
    "simulate_spacetime_transport",
    "simulate_spacetime_separable",
    "simulate_latent",
]

# fixed hash streams used to identify equal site subsets across grid columns
_HASH_SEED = 0x5EEDC0DE


@dataclass(frozen=True)
class SiteSet:
    """Observation locations, optionally tagged with a per-site time."""

    coords: np.ndarray
    times: np.ndarray | None = None
    site_ids: tuple | None = None

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        if coords.ndim == 1:
            coords = coords[:, None]
        if coords.ndim != 2 or coords.shape[0] == 0:
            raise ValueError("coords must be a nonempty (n, d) array")
        if not np.all(np.isfinite(coords)):
            raise ValueError("coordinates must be finite")
        object.__setattr__(self, "coords", coords)
        if self.times is not None:
            times = np.asarray(self.times, dtype=float)
            if times.shape != (coords.shape[0],):
                raise ValueError("times must align with the site count")
            if not np.all(np.isfinite(times)):
                raise ValueError("times must be finite")
            object.__setattr__(self, "times", times)
        if self.site_ids is not None:
            ids = tuple(str(s) for s in self.site_ids)
            if len(ids) != coords.shape[0]:
                raise ValueError("site_ids must align with the site count")
            object.__setattr__(self, "site_ids", ids)

    def __len__(self):
        return self.coords.shape[0]


def _coerce_sites(sites, dimension=None, need_times=False) -> SiteSet:
    if not isinstance(sites, SiteSet):
        sites = SiteSet(np.asarray(sites, dtype=float))
    if dimension is not None and sites.coords.shape[1] != dimension:
        raise ValueError(
            f"sites have dimension {sites.coords.shape[1]}, "
            f"kernel expects {dimension}"
        )
    if need_times and sites.times is None:
        raise ValueError("this simulator needs a per-site time index")
    return sites


@dataclass(frozen=True)
class SimulationConfig:
    """Discretization and reproducibility knobs shared by all simulators.

    grid_cell defaults to a twentieth of the kernel reference scale and
    height_cell to a fiftieth of the effective height range. tail_mass_eps
    bounds every truncated-mass compensation. cell_budget caps the total
    grid size; exceeding it raises :class:`BudgetExceeded` up front instead
    of thrashing.
    """

    rng_seed: int
    n_replicates: int = 1
    grid_cell: float | None = None
    height_cell: float | None = None
    tail_mass_eps: float = 1e-3
    cavalieri_layers: int = 64
    cell_budget: int = 250_000_000

    def __post_init__(self):
        if self.n_replicates < 1:
            raise ValueError("n_replicates must be >= 1")
        if self.grid_cell is not None and self.grid_cell <= 0:
            raise ValueError("grid_cell must be positive")
        if self.height_cell is not None and self.height_cell <= 0:
            raise ValueError("height_cell must be positive")
        if not 0 < self.tail_mass_eps <= 0.05:
            raise ValueError("tail_mass_eps must lie in (0, 0.05]")
        if self.cavalieri_layers < 1:
            raise ValueError("cavalieri_layers must be >= 1")
        if self.cell_budget < 1:
            raise ValueError("cell_budget must be >= 1")


@dataclass
class FieldSample:
    """Simulated values, shaped (replicates, sites) or (replicates, sites, times)."""

    sites: SiteSet
    values: np.ndarray
    basis: LevySeed | None = None
    kernel: HeightFunction | None = None
    method: str = ""
    times: np.ndarray | None = None

    def __post_init__(self):
        self.values = np.asarray(self.values)

    @property
    def coords(self):
        return self.sites.coords


def _unique_rows(coords):
    uniq, inverse = np.unique(coords, axis=0, return_inverse=True)
    return uniq, np.asarray(inverse).ravel()


def _vertical_cap(height: HeightFunction, eps: float) -> float:
    """Height level whose hypograph exceedance mass is eps.

    Only relevant for profiles that are unbounded at the origin; bounded
    profiles keep their exact maximum and lose no mass vertically.
    """
    hmax = height.max_height()
    if np.isfinite(hmax):
        return hmax

    quad = QuadratureSpec(abs_tol=1e-12, rel_tol=1e-10, max_subdivisions=200)
    ref = height.reference_scale()

    def radius_at(level):
        lo, hi = 1e-12 * ref, ref
        while height.height_at(hi) > level:
            hi *= 2.0
        while height.height_at(lo) < level:
            lo /= 2.0
            if lo < 1e-290:
                raise ValueError("height profile inversion failed")
        return _optimize.brentq(
            lambda r: height.height_at(r) - level, lo, hi, xtol=1e-14 * ref
        )

    def mass_above(level):
        rc = radius_at(level)
        if height.dimension == 2:
            f = lambda r: 2.0 * np.pi * r * (height.height_at(r) - level)
        else:
            f = lambda r: 2.0 * (height.height_at(r) - level)
        val, _ = integrate(f, 0.0, rc, quad)
        return val

    level = height.height_at(ref)
    while mass_above(level) > eps:
        level *= 4.0
    lo = level / 4.0
    while mass_above(lo) <= eps and lo > 1e-250:
        lo /= 4.0
    return _optimize.brentq(lambda c: mass_above(c) - eps, lo, level, rtol=1e-10)


class _AtomSet:
    """Cell atoms for one site layout.

    Entries are (column, site, height) triples sorted per column by
    descending height. The atom owned by an entry is the horizontal slab
    between its height and the next lower height in the same column; its
    member set is the column's site prefix up to the entry. Ties produce
    zero-height atoms, so equal-height runs merge for free.
    """

    def __init__(self, n_sites):
        self.n_sites = n_sites
        self._site_parts = []
        self._value_parts = []
        self._length_parts = []
        self.covered = np.zeros(n_sites)
        self.merged = False

    def add_block(self, site_idx_sorted, values_sorted, column_lengths):
        self._site_parts.append(site_idx_sorted)
        self._value_parts.append(values_sorted)
        self._length_parts.append(column_lengths)

    def finalize(self, area):
        self.area = area
        if self._site_parts:
            self.site = np.concatenate(self._site_parts)
            self.value = np.concatenate(self._value_parts)
            lengths = np.concatenate(self._length_parts)
        else:
            self.site = np.zeros(0, dtype=np.int32)
            self.value = np.zeros(0)
            lengths = np.zeros(0, dtype=np.int64)
        del self._site_parts, self._value_parts, self._length_parts
        n = self.site.size
        ends = np.cumsum(lengths)
        nxt = np.empty(n)
        if n:
            nxt[:-1] = self.value[1:]
            nxt[-1] = 0.0
            nxt[ends - 1] = 0.0
        self.atom_height = self.value - nxt
        self.col_ends = ends
        self.col_lengths = lengths
        self.covered *= area

    def merge_atoms(self):
        """Group atoms with identical member sets across columns.

        Returns False (leaving the per-entry layout in place) when the
        merged incidence would be too large to pay off.
        """
        if self.merged:
            return True
        n = self.site.size
        if n == 0:
            self.volumes = np.zeros(0)
            self.incidence = _sparse.csr_array((0, self.n_sites))
            self.merged = True
            return True
        hash_rng = np.random.Generator(np.random.PCG64(_HASH_SEED))
        h1 = hash_rng.integers(0, 2**63, size=self.n_sites, dtype=np.uint64)
        h2 = hash_rng.integers(0, 2**63, size=self.n_sites, dtype=np.uint64)
        starts = self.col_ends - self.col_lengths
        seg = np.repeat(np.arange(self.col_lengths.size), self.col_lengths)
        c1 = np.cumsum(h1[self.site], dtype=np.uint64)
        c2 = np.cumsum(h2[self.site], dtype=np.uint64)
        base1 = np.zeros(self.col_lengths.size, dtype=np.uint64)
        base2 = np.zeros(self.col_lengths.size, dtype=np.uint64)
        base1[1:] = c1[self.col_ends[:-1] - 1]
        base2[1:] = c2[self.col_ends[:-1] - 1]
        packed = np.empty(n, dtype=[("a", np.uint64), ("b", np.uint64)])
        packed["a"] = c1 - base1[seg]
        packed["b"] = c2 - base2[seg]
        mask = self.atom_height > 0
        pos = np.nonzero(mask)[0]
        uniq, first, inverse = np.unique(
            packed[mask], return_index=True, return_inverse=True
        )
        volumes = np.zeros(uniq.size)
        np.add.at(
            volumes, np.asarray(inverse).ravel(), self.atom_height[mask] * self.area
        )
        rep = pos[first]
        rep_start = starts[seg[rep]]
        lengths = (rep - rep_start + 1).astype(np.int64)
        nnz = int(lengths.sum())
        if nnz > 100_000_000:
            return False
        offs = np.concatenate(([0], np.cumsum(lengths)))
        flat = np.repeat(rep_start, lengths) + (
            np.arange(nnz) - np.repeat(offs[:-1], lengths)
        )
        self.incidence = _sparse.csr_array(
            (np.ones(nnz), self.site[flat], offs), shape=(uniq.size, self.n_sites)
        )
        self.volumes = volumes
        self.site = self.value = self.atom_height = None
        self.col_ends = self.col_lengths = None
        self.merged = True
        return True

    def accumulate_replicate(self, seed: LevySeed, rng, out_row):
        """Per-entry path: draw every atom, roll suffix sums onto sites."""
        vols = self.atom_height * self.area
        draws = np.zeros(vols.size)
        mask = vols > 0
        if mask.any():
            draws[mask] = seed.sample_volumes(vols[mask], rng)
        suff = np.append(np.cumsum(draws[::-1])[::-1], 0.0)
        seg = np.repeat(np.arange(self.col_lengths.size), self.col_lengths)
        contrib = suff[:-1] - suff[self.col_ends][seg]
        np.add.at(out_row, self.site, contrib)


def _collect_block(atoms, d2, pad2, height_eval, height_cell, n_levels):
    within = d2 <= pad2
    if not within.any():
        return
    heights = np.zeros_like(d2)
    cols, sites = np.nonzero(within)
    heights[cols, sites] = height_eval(np.sqrt(d2[cols, sites]), sites)
    if height_cell is not None:
        heights = (
            np.minimum(np.floor(heights / height_cell + 0.5), n_levels) * height_cell
        )
    atoms.covered += heights.sum(axis=0)
    pos = heights > 0
    counts_per_col = pos.sum(axis=1)
    if not counts_per_col.any():
        return
    cols, sites = np.nonzero(pos)
    vals = heights[cols, sites]
    order = np.lexsort((-vals, cols))
    atoms.add_block(
        sites[order].astype(np.int32),
        vals[order],
        counts_per_col[counts_per_col > 0].astype(np.int64),
    )


def _build_atoms(
    coords,
    height_eval,
    pad,
    cell,
    dimension,
    budget,
    budget_levels=1,
    n_levels=None,
    height_cell=None,
):
    """Scan the padded column grid and collect atoms for one site layout.

    height_eval(dist, site_indices) returns the (possibly per-site scaled,
    possibly capped) height over center distances. With height_cell set the
    heights snap to vertical cell centers (grid method); without it they are
    used exactly (layer stacks).
    """
    n_sites = coords.shape[0]
    lo = coords.min(axis=0) - pad
    hi = coords.max(axis=0) + pad
    counts = np.maximum(np.ceil((hi - lo) / cell).astype(np.int64), 1)
    n_columns = int(np.prod(counts, dtype=np.int64))
    if n_columns * max(budget_levels, 1) > budget:
        raise BudgetExceeded(
            f"grid of {n_columns} columns x {budget_levels} levels exceeds the "
            f"cell budget {budget}; coarsen cells or raise tail_mass_eps"
        )
    axes = [lo[k] + cell * (np.arange(counts[k]) + 0.5) for k in range(dimension)]
    atoms = _AtomSet(n_sites)
    block = max(1, int(4_000_000 // max(n_sites, 1)))
    pad2 = pad * pad

    if dimension == 2:
        ny = int(counts[1])
        total_cols = int(counts[0]) * ny
        for start in range(0, total_cols, block):
            idx = np.arange(start, min(start + block, total_cols))
            dx = axes[0][idx // ny][:, None] - coords[None, :, 0]
            dy = axes[1][idx % ny][:, None] - coords[None, :, 1]
            _collect_block(
                atoms, dx * dx + dy * dy, pad2, height_eval, height_cell, n_levels
            )
    else:
        xs = axes[0]
        for start in range(0, xs.size, block):
            cx = xs[start : start + block]
            d2 = (cx[:, None] - coords[None, :, 0]) ** 2
            _collect_block(atoms, d2, pad2, height_eval, height_cell, n_levels)

    atoms.finalize(cell**dimension)
    return atoms


def _run_engine(
    seed: LevySeed,
    atoms: _AtomSet,
    target_volumes,
    n_replicates,
    seed_sequence,
    prefer_merge,
):
    """Draw all replicates for a prepared atom set, with compensation draws."""
    merged = (prefer_merge or atoms.merged) and atoms.merge_atoms()
    comp = np.clip(target_volumes - atoms.covered, 0.0, None)
    comp_mask = comp > 0
    n_comp = int(comp_mask.sum())
    n_sites = atoms.n_sites
    values = np.empty((n_replicates, n_sites))

    if merged:
        vols = atoms.volumes
        active = vols > 0
        n_active = int(active.sum())
        chunk = max(1, int(20_000_000 // max(n_active + n_comp, 1)))
        n_chunks = -(-n_replicates // chunk)
        children = seed_sequence.spawn(n_chunks)
        inc_t = atoms.incidence.T.tocsr()
        for c in range(n_chunks):
            r0, r1 = c * chunk, min((c + 1) * chunk, n_replicates)
            rng = np.random.Generator(np.random.PCG64(children[c]))
            draws = np.zeros((r1 - r0, vols.size))
            if n_active:
                draws[:, active] = seed.sample_volumes(
                    np.broadcast_to(vols[active], (r1 - r0, n_active)), rng
                )
            rows = (inc_t @ draws.T).T
            if n_comp:
                rows[:, comp_mask] += seed.sample_volumes(
                    np.broadcast_to(comp[comp_mask], (r1 - r0, n_comp)), rng
                )
            values[r0:r1] = rows
        return values

    children = seed_sequence.spawn(n_replicates)
    for r in range(n_replicates):
        rng = np.random.Generator(np.random.PCG64(children[r]))
        row = np.zeros(n_sites)
        atoms.accumulate_replicate(seed, rng, row)
        if n_comp:
            row[comp_mask] += seed.sample_volumes(comp[comp_mask], rng)
        values[r] = row
    return values


def _grid_cell_size(height: HeightFunction, cfg: SimulationConfig):
    if cfg.grid_cell is not None:
        return cfg.grid_cell
    return height.reference_scale() / 20.0


def _prefer_merge(n_replicates):
    return n_replicates >= 8


def _simulate_nugget(seed, sites, cfg):
    uniq, inverse = _unique_rows(sites.coords)
    children = np.random.SeedSequence(cfg.rng_seed).spawn(cfg.n_replicates)
    vals = np.empty((cfg.n_replicates, uniq.shape[0]))
    ones = np.ones(uniq.shape[0])
    for r in range(cfg.n_replicates):
        rng = np.random.Generator(np.random.PCG64(children[r]))
        vals[r] = seed.sample_volumes(ones, rng)
    return vals[:, inverse]


def _grid_values(seed, height, uniq, cfg, sequence):
    """Grid-method replicate block at deduplicated sites."""
    eps = cfg.tail_mass_eps
    pad = height.truncation_radius(eps)
    cell = _grid_cell_size(height, cfg)
    cap = _vertical_cap(height, eps)
    h_cell = cfg.height_cell if cfg.height_cell is not None else cap / 50.0
    n_levels = max(int(round(cap / h_cell)), 1)

    def height_eval(dist, site_idx):
        return np.minimum(height.height_at(dist), cap)

    atoms = _build_atoms(
        uniq,
        height_eval,
        pad,
        cell,
        height.dimension,
        cfg.cell_budget,
        budget_levels=n_levels,
        n_levels=n_levels,
        height_cell=h_cell,
    )
    return _run_engine(
        seed,
        atoms,
        np.ones(uniq.shape[0]),
        cfg.n_replicates,
        sequence,
        _prefer_merge(cfg.n_replicates),
    )


def simulate_grid(
    seed: LevySeed,
    height: HeightFunction,
    sites,
    cfg: SimulationConfig,
    aniso: Anisotropy | None = None,
) -> FieldSample:
    """Simulate field replicates at the given sites on a fine cell grid.

    An anisotropy, if given, maps the sites into isotropic coordinates
    before simulation. Duplicated site rows receive identical values within
    each replicate, and the same rng_seed reproduces the whole sample bit
    for bit.
    """
    if height.is_nugget:
        sites = _coerce_sites(sites)
        values = _simulate_nugget(seed, sites, cfg)
        return FieldSample(sites, values, basis=seed, kernel=height, method="grid")
    sites = _coerce_sites(sites, height.dimension)
    work = sites.coords
    if aniso is not None:
        work = transform_coordinates(aniso, work)
    uniq, inverse = _unique_rows(work)
    values = _grid_values(seed, height, uniq, cfg, np.random.SeedSequence(cfg.rng_seed))
    return FieldSample(
        sites, values[:, inverse], basis=seed, kernel=height, method="grid"
    )


def _cavalieri_layers(height: HeightFunction, m: int, eps: float):
    """Equal-mass layer radii and slab heights for the disc stack."""
    sr = height.support_radius()
    if np.isfinite(sr):
        top_mass, r_max = 1.0, sr
    else:
        top_mass = 1.0 - eps
        r_max = height.radial_mass_inverse(top_mass)
    radii = np.empty(m)
    for i in range(1, m + 1):
        radii[i - 1] = r_max if i == m else height.radial_mass_inverse(top_mass * i / m)
    profile = height.height_at(radii)
    slab = profile - np.append(profile[1:], 0.0)
    keep = slab > 0
    return radii[keep], slab[keep]


def simulate_cavalieri(
    seed: LevySeed, height: HeightFunction, sites, cfg: SimulationConfig
) -> FieldSample:
    """Simulate by stacking disc-smoothed planar bases (dimension 2 only).

    Layer radii sit at equal-mass quantiles of the kernel's radial
    distribution; slab i carries height profile(r_i) - profile(r_{i+1}) as
    its exponent per unit area. Singular peaks need no vertical cap here:
    the innermost disc simply absorbs the peak mass. With a cylinder kernel
    the stack is one disc and the construction is exact for any layer count.
    """
    if height.is_nugget:
        raise ValueError("cavalieri stacking needs a radial height function")
    if height.dimension != 2:
        raise ValueError("cavalieri stacking is implemented for dimension 2")
    sites = _coerce_sites(sites, 2)
    uniq, inverse = _unique_rows(sites.coords)
    radii, slab = _cavalieri_layers(height, cfg.cavalieri_layers, cfg.tail_mass_eps)
    suffix = np.append(np.cumsum(slab[::-1])[::-1], 0.0)

    def height_eval(dist, site_idx):
        return suffix[np.searchsorted(radii, dist, side="left")]

    pad = float(radii[-1]) if radii.size else 0.0
    atoms = _build_atoms(
        uniq,
        height_eval,
        pad,
        _grid_cell_size(height, cfg),
        2,
        cfg.cell_budget,
        budget_levels=max(len(radii), 1),
    )
    values = _run_engine(
        seed,
        atoms,
        np.ones(uniq.shape[0]),
        cfg.n_replicates,
        np.random.SeedSequence(cfg.rng_seed),
        _prefer_merge(cfg.n_replicates),
    )
    return FieldSample(
        sites, values[:, inverse], basis=seed, kernel=height, method="cavalieri"
    )


# ---------------------------------------------------------------------------
# space-time


class TimeKernel:
    """Nonincreasing normalized weights k(0), k(1), ... over integer lags."""

    def weight(self, i):
        raise NotImplementedError

    def survival(self, delta):
        """Temporal correlation: the weight sum over lags >= delta."""
        raise NotImplementedError

    def truncation_index(self, eps):
        """Smallest index I with survival(I + 1) <= eps."""
        i = 0
        while self.survival(i + 1) > eps:
            i += 1
            if i > 10_000_000:
                raise ValueError("time kernel tail too heavy to truncate")
        return i


@dataclass(frozen=True)
class GeometricTimeKernel(TimeKernel):
    """k(i) = p (1-p)^i, giving temporal correlation (1-p)^delta."""

    p: float

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise ValueError("p must lie in (0, 1)")

    def weight(self, i):
        return self.p * (1.0 - self.p) ** np.asarray(i)

    def survival(self, delta):
        return (1.0 - self.p) ** np.asarray(delta, dtype=float)

    def truncation_index(self, eps):
        return max(0, int(np.ceil(np.log(eps) / np.log1p(-self.p))) - 1)


@dataclass(frozen=True)
class PoissonPMFTimeKernel(TimeKernel):
    """Poisson(rate) probability weights; nonincreasing only for rate <= 1."""

    rate: float

    def __post_init__(self):
        if not 0.0 < self.rate <= 1.0:
            raise ValueError("rate must lie in (0, 1] to keep weights nonincreasing")

    def weight(self, i):
        i = np.asarray(i, dtype=float)
        return np.exp(-self.rate + i * np.log(self.rate) - _gammaln(i + 1.0))

    def survival(self, delta):
        return _stats.poisson.sf(np.asarray(delta, dtype=float) - 1.0, self.rate)


@dataclass(frozen=True)
class ZipfTimeKernel(TimeKernel):
    """Weights proportional to (i+1)^(-exponent) on lags 0..i_max."""

    exponent: float
    i_max: int

    def __post_init__(self):
        if self.exponent <= 0 or self.i_max < 0:
            raise ValueError("exponent must be positive and i_max >= 0")

    def _weights(self):
        w = (np.arange(self.i_max + 1) + 1.0) ** (-self.exponent)
        return w / w.sum()

    def weight(self, i):
        w = self._weights()
        i = np.asarray(i)
        out = np.where((i >= 0) & (i <= self.i_max), w[np.clip(i, 0, self.i_max)], 0.0)
        return float(out) if np.ndim(out) == 0 else out

    def survival(self, delta):
        cum = np.append(np.cumsum(self._weights()[::-1])[::-1], 0.0)
        out = cum[np.clip(np.asarray(delta, dtype=int), 0, self.i_max + 1)]
        return float(out) if np.ndim(out) == 0 else out

    def truncation_index(self, eps):
        return self.i_max


@dataclass(frozen=True)
class TruncatedCustomTimeKernel(TimeKernel):
    """Explicit finite weight vector: positive, nonincreasing, summing to 1."""

    weights: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a nonempty vector")
        if np.any(w <= 0) or np.any(np.diff(w) > 1e-12):
            raise ValueError("weights must be positive and nonincreasing")
        if abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")
        object.__setattr__(self, "weights", tuple(float(x) for x in w))

    def weight(self, i):
        w = np.asarray(self.weights)
        i = np.asarray(i)
        out = np.where((i >= 0) & (i < w.size), w[np.clip(i, 0, w.size - 1)], 0.0)
        return float(out) if np.ndim(out) == 0 else out

    def survival(self, delta):
        cum = np.append(np.cumsum(np.asarray(self.weights)[::-1])[::-1], 0.0)
        out = cum[np.clip(np.asarray(delta, dtype=int), 0, len(self.weights))]
        return float(out) if np.ndim(out) == 0 else out

    def truncation_index(self, eps):
        return len(self.weights) - 1


def simulate_spacetime_transport(
    seed: LevySeed,
    height: HeightFunction,
    sites,
    velocity,
    cfg: SimulationConfig,
) -> FieldSample:
    """Frozen-field transport: the site at time t reads the basis at s + v t.

    sites must carry a per-site time index. Correlation depends on
    space-time lags only through the shifted separation
    (s1 - s2) + v (t1 - t2); two observations whose shifted positions agree
    read the same region and match exactly within a replicate.
    """
    sites = _coerce_sites(sites, height.dimension, need_times=True)
    v = np.asarray(velocity, dtype=float).reshape(-1)
    if v.size != height.dimension:
        raise ValueError("velocity dimension must match the kernel dimension")
    shifted = sites.coords + sites.times[:, None] * v[None, :]
    inner = simulate_grid(seed, height, shifted, cfg)
    return FieldSample(
        sites, inner.values, basis=seed, kernel=height, method="transport"
    )


def simulate_spacetime_separable(
    seed: LevySeed,
    height: HeightFunction,
    sites,
    times,
    time_kernel: TimeKernel,
    cfg: SimulationConfig,
) -> FieldSample:
    """Innovation-driven dynamics: X(s, t) sums lagged independent bases.

    Each integer base time carries an independent planar basis; its
    contribution at lag i uses the height function scaled by the weight
    k(i), so the lag hypographs are nested and drawn coherently from one
    basis. Temporal correlation at lag delta is the weight survival.

    Weights far below the vertical cell resolution contribute as site-local
    noise rather than smoothed mass; tighten height_cell if distant-lag
    correlation matters.
    """
    if height.is_nugget:
        raise ValueError("separable dynamics needs a continuous spatial kernel")
    sites = _coerce_sites(sites, height.dimension)
    coords = sites.coords
    times = np.asarray(times, dtype=int)
    if times.size == 0:
        raise ValueError("need at least one time")
    n = coords.shape[0]
    eps = cfg.tail_mass_eps
    i_max = time_kernel.truncation_index(eps)
    time_index = {int(t): k for k, t in enumerate(times)}

    pad = height.truncation_radius(eps)
    cell = _grid_cell_size(height, cfg)
    cap = _vertical_cap(height, eps)
    h_cell = cfg.height_cell if cfg.height_cell is not None else cap / 50.0
    n_levels = max(int(round(cap / h_cell)), 1)

    values = np.zeros((cfg.n_replicates, n, times.size))
    base_times = range(int(times.min()) - i_max, int(times.max()) + 1)
    children = np.random.SeedSequence(cfg.rng_seed).spawn(len(base_times) + 1)
    atom_cache = {}

    for b_idx, tau in enumerate(base_times):
        lags = [i for i in range(i_max + 1) if (tau + i) in time_index]
        if not lags:
            continue
        scales = np.array([float(time_kernel.weight(i)) for i in lags])
        key = tuple(np.round(scales, 15))
        if key not in atom_cache:
            scale_vec = np.repeat(scales, n)

            def height_eval(dist, site_idx, _sv=scale_vec):
                return _sv[site_idx] * np.minimum(height.height_at(dist), cap)

            atom_cache[key] = _build_atoms(
                np.tile(coords, (len(lags), 1)),
                height_eval,
                pad,
                cell,
                height.dimension,
                cfg.cell_budget,
                budget_levels=n_levels,
                n_levels=n_levels,
                height_cell=h_cell,
            )
        vals = _run_engine(
            seed,
            atom_cache[key],
            np.repeat(scales, n),
            cfg.n_replicates,
            children[b_idx],
            _prefer_merge(cfg.n_replicates),
        )
        for k, i in enumerate(lags):
            values[:, :, time_index[tau + i]] += vals[:, k * n : (k + 1) * n]

    tail_mass = float(time_kernel.survival(i_max + 1))
    if tail_mass > 0:
        comp_children = children[-1].spawn(cfg.n_replicates)
        for r in range(cfg.n_replicates):
            rng = np.random.Generator(np.random.PCG64(comp_children[r]))
            values[r] += seed.sample_volumes(np.full((n, times.size), tail_mass), rng)
    return FieldSample(
        sites,
        values,
        basis=seed,
        kernel=height,
        method="separable",
        times=times.astype(float),
    )


def simulate_latent(
    seed: GammaSeed,
    height: HeightFunction,
    sites,
    link: str,
    cfg: SimulationConfig,
    return_latent: bool = False,
):
    """Hierarchical field: latent gamma intensity, conditionally independent obs.

    link="exponential_rate" draws Exp(rate = G(s)) values, giving
    generalized Pareto margins; link="poisson_mean" draws Poisson(G(s))
    counts, giving negative binomial margins whose overdispersion is the
    gamma seed shape. Observations at distinct sites are independent given
    the latent field; dependence enters only through it.
    """
    if not isinstance(seed, GammaSeed):
        raise ValueError("latent field requires a gamma seed")
    canon = link.replace("-", "_").lower()
    if canon not in ("exponential_rate", "poisson_mean"):
        raise ValueError("link must be exponential_rate or poisson_mean")
    sites = _coerce_sites(sites, height.dimension)
    uniq, inverse = _unique_rows(sites.coords)
    latent_seq, obs_seq = np.random.SeedSequence(cfg.rng_seed).spawn(2)
    latent_vals = _grid_values(seed, height, uniq, cfg, latent_seq)[:, inverse]
    obs_children = obs_seq.spawn(cfg.n_replicates)
    out = np.empty_like(latent_vals)
    for r in range(cfg.n_replicates):
        rng = np.random.Generator(np.random.PCG64(obs_children[r]))
        if canon == "exponential_rate":
            out[r] = rng.exponential(scale=1.0 / np.maximum(latent_vals[r], 1e-300))
        else:
            out[r] = rng.poisson(lam=latent_vals[r]).astype(float)
    obs = FieldSample(sites, out, basis=seed, kernel=height, method=f"latent:{canon}")
    if return_latent:
        latent = FieldSample(sites, latent_vals, basis=seed, kernel=height, method="grid")
        return obs, latent
    return obs
