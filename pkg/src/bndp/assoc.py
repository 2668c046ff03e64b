"""Marginal-association screening that produces parent-set constraints.

Pairwise Pearson tests with an FDR (Benjamini-Hochberg) or correlation
cutoff define possible-parent sets; a survival outcome is screened with
univariate Cox regressions instead. Phenotype-driven mode restricts
screening to two or three ancestor levels of a designated outcome.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import (
    SURVIVAL,
    Dataset,
    NodeSubset,
    ParentConstraints,
    StructureError,
)
from .numeric import NumericError, chisq_sf, cox_fit, student_t_sf


class AssocError(ValueError):
    """Screening could not produce usable constraints."""


class EmptyFeasSetError(AssocError):
    """No associations passed the cutoff; suggests loosening it."""


class ScreeningWarning(UserWarning):
    """Non-fatal screening issue (failed fit, constant column, ...)."""


@dataclass(frozen=True)
class ScreenOptions:
    """Configuration for constraint screening.

    Exactly one of ``alpha`` (BH-adjusted p-value cutoff) and
    ``corr_cutoff`` (absolute-correlation cutoff) must be set. Phenotype
    mode requires ``outcome`` and screens ``levels`` generations of
    ancestors; ``top_k`` optionally trims the first level to the most
    significant candidates. ``user_pp`` skips screening entirely.
    """

    mode: str = "all_pairs"
    alpha: float | None = None
    corr_cutoff: float | None = None
    outcome: str | None = None
    levels: int = 3
    top_k: int | None = None
    user_pp: dict[str, list[str]] | None = None

    def __post_init__(self) -> None:
        if self.mode not in ("all_pairs", "phenotype"):
            raise AssocError(f"unknown screening mode {self.mode!r}")
        if self.user_pp is None:
            if (self.alpha is None) == (self.corr_cutoff is None):
                raise AssocError("exactly one of alpha and corr_cutoff must be set")
            if self.alpha is not None and not 0 < self.alpha <= 1:
                raise AssocError(f"alpha must be in (0, 1], got {self.alpha}")
            if self.corr_cutoff is not None and not 0 <= self.corr_cutoff < 1:
                raise AssocError(f"corr_cutoff must be in [0, 1), got {self.corr_cutoff}")
        if self.mode == "phenotype":
            if self.outcome is None:
                raise AssocError("phenotype mode requires an outcome column")
            if self.levels not in (2, 3):
                raise AssocError(f"phenotype levels must be 2 or 3, got {self.levels}")
        if self.top_k is not None and self.top_k < 1:
            raise AssocError("top_k must be a positive integer")


def pearson_r(x: np.ndarray, y: np.ndarray) -> float:
    """Sample Pearson correlation coefficient."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise AssocError("inputs must be equal-length vectors")
    if x.size < 3:
        raise AssocError("need at least 3 observations")
    xc = x - x.mean()
    yc = y - y.mean()
    sx = float(xc @ xc)
    sy = float(yc @ yc)
    if sx == 0.0 or sy == 0.0:
        raise AssocError("correlation undefined for a constant vector")
    r = float(xc @ yc) / math.sqrt(sx * sy)
    return max(-1.0, min(1.0, r))


def corr_test(x: np.ndarray, y: np.ndarray) -> float:
    """Two-sided p-value for zero correlation via the t transform."""
    if len(x) < 4:
        raise AssocError("need at least 4 observations for the correlation test")
    r = pearson_r(x, y)
    return _r_to_pvalue(r, len(x))


def _r_to_pvalue(r: float, n: int) -> float:
    if abs(r) >= 1.0:
        return 0.0
    t = abs(r) * math.sqrt((n - 2) / (1.0 - r * r))
    return 2.0 * student_t_sf(t, n - 2)


def bh_adjust(p_values: np.ndarray) -> np.ndarray:
    """Benjamini-Hochberg step-up adjusted p-values, in input order."""
    p = np.asarray(p_values, dtype=float)
    if p.ndim != 1:
        raise AssocError("p-values must be a vector")
    if p.size == 0:
        return p.copy()
    if np.any((p < 0) | (p > 1)):
        raise AssocError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    ranked = p[order] * m / np.arange(1, m + 1)
    adjusted = np.minimum.accumulate(ranked[::-1])[::-1]
    adjusted = np.minimum(adjusted, 1.0)
    out = np.empty(m)
    out[order] = adjusted
    return out


def cox_screen(
    data: Dataset, outcome: int, candidates: list[int]
) -> np.ndarray:
    """Likelihood-ratio chi-squared p-value per candidate, one at a time.

    Failed fits are recorded as p = 1 with a warning so a screening run
    never aborts.
    """
    col = data.column(outcome)
    if col.kind != SURVIVAL:
        raise AssocError(f"column {col.name!r} is not a survival outcome")
    time = col.values[:, 0]
    status = col.values[:, 1]
    pvals = np.ones(len(candidates))
    for k, i in enumerate(candidates):
        x = data.numeric_values(i)
        sd = x.std()
        if sd > 0:
            x = (x - x.mean()) / sd
        try:
            fit = cox_fit(time, status, x[:, None])
        except NumericError as exc:
            warnings.warn(
                f"Cox screening failed for {data.column(i).name!r}: {exc}",
                ScreeningWarning,
                stacklevel=2,
            )
            continue
        lr = 2.0 * (fit.log_likelihood - fit.null_log_likelihood)
        pvals[k] = chisq_sf(max(lr, 0.0), fit.n_params)
    return pvals


def _encoded_matrix(data: Dataset) -> tuple[np.ndarray, list[int]]:
    """Float matrix of all non-survival columns plus their indices."""
    idx = [i for i in range(data.p) if data.column(i).kind != SURVIVAL]
    M = np.column_stack([data.numeric_values(i) for i in idx]) if idx else np.zeros((data.n_rows, 0))
    return M, idx


def _corr_against(y: np.ndarray, M: np.ndarray) -> np.ndarray:
    """Correlation of ``y`` with each column of ``M``; NaN where undefined."""
    n = y.shape[0]
    yc = y - y.mean()
    sy = float(yc @ yc)
    Mc = M - M.mean(axis=0)
    sm = np.einsum("ij,ij->j", Mc, Mc)
    with np.errstate(invalid="ignore", divide="ignore"):
        r = (yc @ Mc) / np.sqrt(sy * sm)
    if sy == 0.0:
        r[:] = np.nan
    r[sm == 0.0] = np.nan
    return np.clip(r, -1.0, 1.0)


def _pvalues_from_r(r: np.ndarray, n: int) -> np.ndarray:
    """Vectorized two-sided correlation test; NaN r maps to p = 1."""
    from scipy import special

    r = np.asarray(r, dtype=float)
    out = np.ones_like(r)
    ok = np.isfinite(r)
    exact = ok & (np.abs(r) >= 1.0)
    out[exact] = 0.0
    mid = ok & ~exact
    if np.any(mid):
        t2 = r[mid] ** 2 * (n - 2) / (1.0 - r[mid] ** 2)
        df = n - 2
        out[mid] = special.betainc(0.5 * df, 0.5, df / (df + t2))
    return out


def build_constraints(
    data: Dataset, opts: ScreenOptions, indegree: int
) -> tuple[ParentConstraints, Dataset]:
    """Run Algorithm-style screening and reduce the data to the feasible set.

    Returns constraints re-indexed to the reduced dataset's dense node
    indices. The outcome node, when present, receives possible parents
    but never appears in another node's possible-parent set, and the
    survival column can only ever be a sink.
    """
    if opts.user_pp is not None:
        pp = _pp_from_user(data, opts.user_pp)
    elif data.p == 1:
        pp = [0]
    elif opts.mode == "all_pairs":
        pp = _screen_all_pairs(data, opts)
    else:
        pp = _screen_phenotype(data, opts)

    outcome_idx = data.index_of(opts.outcome) if opts.outcome is not None else None
    if outcome_idx is None and data.survival_index is not None:
        outcome_idx = data.survival_index

    members = 0
    for m in pp:
        members |= m
    feas = [i for i in range(data.p) if pp[i] or (members >> i) & 1]
    if outcome_idx is not None and outcome_idx not in feas and pp[outcome_idx]:
        feas.append(outcome_idx)
        feas.sort()
    if data.p == 1:
        feas = [0]
    if not feas:
        raise EmptyFeasSetError(
            "no associations passed the cutoff; try a looser alpha or corr_cutoff"
        )

    dense = {orig: k for k, orig in enumerate(feas)}
    reduced_pp = []
    for orig in feas:
        mask = 0
        m = pp[orig]
        while m:
            lsb = m & -m
            mask |= 1 << dense[lsb.bit_length() - 1]
            m ^= lsb
        reduced_pp.append(NodeSubset(mask))
    constraints = ParentConstraints(tuple(reduced_pp), indegree)
    return constraints, data.restrict(feas)


def _pp_from_user(data: Dataset, user_pp: dict[str, list[str]]) -> list[int]:
    pp = [0] * data.p
    for child, parents in user_pp.items():
        ci = data.index_of(child)
        for par in parents:
            pi = data.index_of(par)
            if pi == ci:
                raise StructureError(f"{child!r} lists itself as a possible parent")
            if data.column(pi).kind == SURVIVAL:
                raise StructureError(
                    f"survival column {par!r} can only be a sink, not a possible parent"
                )
            pp[ci] |= 1 << pi
    return pp


def _screen_all_pairs(data: Dataset, opts: ScreenOptions) -> list[int]:
    M, idx = _encoded_matrix(data)
    n = data.n_rows
    outcome_idx = data.index_of(opts.outcome) if opts.outcome is not None else None
    if outcome_idx is None:
        outcome_idx = data.survival_index

    q = len(idx)
    pairs: list[tuple[int, int]] = []
    rvals: list[float] = []
    if q >= 2:
        sd = M.std(axis=0)
        for c in np.nonzero(sd == 0)[0]:
            warnings.warn(
                f"column {data.column(idx[c]).name!r} is constant; "
                "treated as unassociated",
                ScreeningWarning,
                stacklevel=3,
            )
        with np.errstate(invalid="ignore"):
            R = np.corrcoef(M, rowvar=False)
        for a in range(q):
            for b in range(a + 1, q):
                r = R[a, b]
                pairs.append((idx[a], idx[b]))
                rvals.append(r if np.isfinite(r) else np.nan)

    pp = [0] * data.p
    if pairs:
        r_arr = np.array(rvals)
        if opts.alpha is not None:
            pv = _pvalues_from_r(r_arr, n)
            pv[~np.isfinite(r_arr)] = 1.0
            keep = bh_adjust(pv) <= opts.alpha
        else:
            keep = np.abs(np.nan_to_num(r_arr)) >= opts.corr_cutoff
        for (a, b), ok in zip(pairs, keep):
            if not ok:
                continue
            if a != outcome_idx:
                pp[b] |= 1 << a
            if b != outcome_idx:
                pp[a] |= 1 << b

    if data.survival_index is not None and data.p > 1:
        if opts.alpha is None:
            raise AssocError(
                "a survival outcome is screened by Cox p-values; "
                "use the alpha cutoff instead of corr_cutoff"
            )
        cands = [i for i in range(data.p) if i != data.survival_index]
        pv = bh_adjust(cox_screen(data, data.survival_index, cands))
        for i, ok in zip(cands, pv <= opts.alpha):
            if ok:
                pp[data.survival_index] |= 1 << i
    return pp


def _screen_level(
    data: Dataset,
    targets: list[int],
    excluded: set[int],
    opts: ScreenOptions,
) -> dict[int, int]:
    """Screen possible parents for each target; one BH family per level."""
    M, idx = _encoded_matrix(data)
    n = data.n_rows
    tests: list[tuple[int, int]] = []
    stats: list[float] = []
    for t in targets:
        col = data.column(t)
        if col.kind == SURVIVAL:
            if opts.alpha is None:
                raise AssocError(
                    "a survival outcome is screened by Cox p-values; "
                    "use the alpha cutoff instead of corr_cutoff"
                )
            cands = [i for i in idx if i != t and i not in excluded]
            pv = cox_screen(data, t, cands)
            for i, p in zip(cands, pv):
                tests.append((t, i))
                stats.append(p)
            continue
        y = data.numeric_values(t)
        r = _corr_against(y, M)
        pv = _pvalues_from_r(r, n) if opts.alpha is not None else None
        for k, i in enumerate(idx):
            if i == t or i in excluded:
                continue
            tests.append((t, i))
            if pv is not None:
                stats.append(pv[k])
            else:
                stats.append(abs(r[k]) if np.isfinite(r[k]) else 0.0)

    result: dict[int, int] = {t: 0 for t in targets}
    if not tests:
        return result
    arr = np.array(stats)
    if opts.alpha is not None:
        keep = bh_adjust(arr) <= opts.alpha
    else:
        keep = arr >= opts.corr_cutoff
    for (t, i), ok in zip(tests, keep):
        if ok:
            result[t] |= 1 << i
    return result


def _screen_phenotype(data: Dataset, opts: ScreenOptions) -> list[int]:
    outcome = data.index_of(opts.outcome)
    pp = [0] * data.p
    excluded = {outcome}

    level1 = _screen_level(data, [outcome], excluded, opts)[outcome]
    if opts.top_k is not None and level1.bit_count() > opts.top_k:
        level1 = _trim_top_k(data, outcome, level1, opts)
    pp[outcome] = level1

    frontier = sorted(NodeSubset(level1))
    assigned = {outcome}
    for _ in range(opts.levels - 1):
        frontier = [t for t in frontier if t not in assigned]
        if not frontier:
            break
        found = _screen_level(data, frontier, excluded, opts)
        next_members = 0
        for t in frontier:
            pp[t] = found[t]
            assigned.add(t)
            next_members |= found[t]
        frontier = sorted(NodeSubset(next_members))
    return pp


def _trim_top_k(data: Dataset, outcome: int, mask: int, opts: ScreenOptions) -> int:
    """Keep the top-k level-1 candidates by significance (ties by name)."""
    cands = sorted(NodeSubset(mask))
    col = data.column(outcome)
    if col.kind == SURVIVAL:
        score = cox_screen(data, outcome, cands)
    elif opts.alpha is not None:
        y = data.numeric_values(outcome)
        score = np.array(
            [corr_test(y, data.numeric_values(i)) for i in cands]
        )
    else:
        y = data.numeric_values(outcome)
        score = np.array([-abs(pearson_r(y, data.numeric_values(i))) for i in cands])
    ranked = sorted(zip(score, [data.column(i).name for i in cands], cands))
    out = 0
    for _, _, i in ranked[: opts.top_k]:
        out |= 1 << i
    return out
