"""Exact information theory over small discrete distributions.

Everything here is computed by full enumeration in natural-log units.  The
point is to check the decomposition identities and the direction of every
variational bound used by the training objective on models small enough to
enumerate, with no sampling error at all.

Variable naming in a :class:`FactoredModel` joint: ``X1..XN`` for the
programs, ``Z1..ZN`` for the language-specific latents and ``ZS`` for the
shared latent.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InvalidModel, OverlappingSets, TooLargeToEnumerate, UnknownVariable

MAX_OUTCOMES = 10**6
ROW_TOL = 1e-12


def to_bits(nats: float) -> float:
    return nats / math.log(2.0)


def _xlogx_sum(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(-(p * np.log(p)).sum())


class DiscreteJoint:
    """Probability table over named finite variables (row-major over outcomes)."""

    def __init__(self, variables: Sequence[tuple[str, int]], table):
        self.variables = [(str(n), int(s)) for n, s in variables]
        names = [n for n, _ in self.variables]
        if len(set(names)) != len(names):
            raise InvalidModel("duplicate variable names")
        shape = tuple(s for _, s in self.variables)
        size = int(np.prod(shape, dtype=np.int64)) if shape else 1
        if size > MAX_OUTCOMES:
            raise TooLargeToEnumerate(f"{size} joint outcomes exceeds {MAX_OUTCOMES}")
        table = np.asarray(table, dtype=np.float64).reshape(shape)
        if np.any(table < 0):
            raise InvalidModel("negative probability")
        if abs(table.sum() - 1.0) > ROW_TOL:
            raise InvalidModel(f"table sums to {table.sum()!r}")
        self.table = table
        self._axis = {n: i for i, n in enumerate(names)}

    @property
    def names(self) -> list[str]:
        return [n for n, _ in self.variables]

    def axes(self, names: Iterable[str]) -> tuple[int, ...]:
        out = []
        for n in names:
            if n not in self._axis:
                raise UnknownVariable(n)
            out.append(self._axis[n])
        return tuple(out)

    def marginal(self, names: Sequence[str]) -> "DiscreteJoint":
        names = list(dict.fromkeys(names))
        keep = self.axes(names)
        drop = tuple(i for i in range(self.table.ndim) if i not in keep)
        t = self.table.sum(axis=drop) if drop else self.table
        # remaining axes are in original order; permute into requested order
        remaining = [i for i in range(self.table.ndim) if i in keep]
        perm = [remaining.index(k) for k in keep]
        t = np.transpose(t, perm)
        return DiscreteJoint([self.variables[k] for k in keep], t)


def _as_names(vs) -> list[str]:
    if isinstance(vs, str):
        return [vs]
    return list(vs)


def entropy(J: DiscreteJoint, vars) -> float:
    names = _as_names(vars)
    if not names:
        return 0.0
    J.axes(names)
    return _xlogx_sum(J.marginal(names).table.ravel())


def _check_disjoint(*groups: list[str]) -> None:
    seen: set[str] = set()
    for g in groups:
        if seen & set(g):
            raise OverlappingSets(f"variable sets overlap on {sorted(seen & set(g))}")
        seen |= set(g)


def mutual_information(J: DiscreteJoint, A, B) -> float:
    a, b = _as_names(A), _as_names(B)
    _check_disjoint(a, b)
    return entropy(J, a) + entropy(J, b) - entropy(J, a + b)


def conditional_mi(J: DiscreteJoint, A, B, C) -> float:
    a, b, c = _as_names(A), _as_names(B), _as_names(C)
    _check_disjoint(a, b, c)
    return entropy(J, a + c) + entropy(J, b + c) - entropy(J, c) - entropy(J, a + b + c)


def interaction_information(J: DiscreteJoint, A, B, C) -> float:
    """I(A;B;C) = I(A;C) - I(A;C|B); negative for synergy, positive for redundancy."""
    return mutual_information(J, A, C) - conditional_mi(J, A, C, B)


def interaction_information_entropies(J: DiscreteJoint, A, B, C) -> float:
    """Same quantity by inclusion-exclusion over joint entropies."""
    a, b, c = _as_names(A), _as_names(B), _as_names(C)
    _check_disjoint(a, b, c)
    h = lambda vs: entropy(J, vs)  # noqa: E731
    return h(a) + h(b) + h(c) - h(a + b) - h(a + c) - h(b + c) + h(a + b + c)


# ---------------------------------------------------------------------------
# factored latent-variable models


def _dirichlet_rows(rng: np.random.Generator, lead: tuple[int, ...], k: int) -> np.ndarray:
    return rng.dirichlet(np.ones(k), size=lead if lead else None).reshape(lead + (k,))


def _check_rows(name: str, table: np.ndarray) -> None:
    if np.any(table < 0):
        raise InvalidModel(f"{name}: negative entries")
    err = np.abs(table.sum(axis=-1) - 1.0).max()
    if err > ROW_TOL:
        raise InvalidModel(f"{name}: rows sum off by {err:.3g}")


@dataclass
class FactoredModel:
    """Data distribution, factored inference tables and generative tables.

    Shapes: ``p_data`` is ``x_sizes``; ``q_specific[i]`` is ``(|Xi|, |Zi|)``;
    ``q_shared`` is ``x_sizes + (|ZS|,)``; ``r_shift[i]`` is ``(|Xi|, |ZS|)``;
    ``decoders[i]`` is ``p(xi | zi, zs)`` with shape ``(|Zi|, |ZS|, |Xi|)``.
    """

    p_data: np.ndarray
    q_specific: list[np.ndarray]
    q_shared: np.ndarray
    r_shift: list[np.ndarray]
    prior_specific: list[np.ndarray]
    prior_shared: np.ndarray
    decoders: list[np.ndarray]
    x_sizes: tuple[int, ...] = field(init=False)
    z_sizes: tuple[int, ...] = field(init=False)
    zs_size: int = field(init=False)

    def __post_init__(self):
        self.p_data = np.asarray(self.p_data, dtype=np.float64)
        self.x_sizes = tuple(self.p_data.shape)
        self.z_sizes = tuple(np.asarray(q).shape[1] for q in self.q_specific)
        self.zs_size = int(np.asarray(self.prior_shared).shape[0])
        self.validate()

    @property
    def n_languages(self) -> int:
        return len(self.x_sizes)

    def validate(self) -> None:
        n = self.n_languages
        if n < 1:
            raise InvalidModel("need at least one observed variable")
        for name, seq in (("q_specific", self.q_specific), ("r_shift", self.r_shift),
                          ("prior_specific", self.prior_specific), ("decoders", self.decoders)):
            if len(seq) != n:
                raise InvalidModel(f"{name} needs {n} tables, got {len(seq)}")
        if abs(self.p_data.sum() - 1.0) > ROW_TOL or np.any(self.p_data < 0):
            raise InvalidModel("p_data is not a distribution")
        _check_rows("q_shared", self.q_shared)
        if self.q_shared.shape != self.x_sizes + (self.zs_size,):
            raise InvalidModel(f"q_shared shape {self.q_shared.shape}")
        _check_rows("prior_shared", self.prior_shared)
        for i in range(n):
            xs, zs = self.x_sizes[i], self.z_sizes[i]
            expect = {
                "q_specific": (self.q_specific[i], (xs, zs)),
                "r_shift": (self.r_shift[i], (xs, self.zs_size)),
                "prior_specific": (self.prior_specific[i], (zs,)),
                "decoders": (self.decoders[i], (zs, self.zs_size, xs)),
            }
            for name, (tab, shape) in expect.items():
                tab = np.asarray(tab)
                if tab.shape != shape:
                    raise InvalidModel(f"{name}[{i}] shape {tab.shape}, expected {shape}")
                _check_rows(f"{name}[{i}]", tab)
        total = int(np.prod(self.x_sizes)) * int(np.prod(self.z_sizes)) * self.zs_size
        if total > MAX_OUTCOMES:
            raise TooLargeToEnumerate(f"{total} joint outcomes exceeds {MAX_OUTCOMES}")

    # -- joint tables over (x1..xN, z1..zN, zs) ---------------------------
    def _expand(self, arr: np.ndarray, axes: Sequence[int]) -> np.ndarray:
        """Place ``arr``'s axes at positions ``axes`` of the full joint layout."""
        n = self.n_languages
        full_ndim = 2 * n + 1
        order = np.argsort(axes)
        arr = np.transpose(arr, order)
        shape = [1] * full_ndim
        for ax, size in zip(sorted(axes), arr.shape):
            shape[ax] = size
        return arr.reshape(shape)

    def _x_ax(self, i):
        return i

    def _z_ax(self, i):
        return self.n_languages + i

    @property
    def _zs_ax(self):
        return 2 * self.n_languages

    def posterior_table(self, log_space: bool = False) -> np.ndarray:
        """q(z1..zN, zs | x) laid out over (x.., z.., zs)."""
        n = self.n_languages
        factors = [self._expand(self.q_shared, list(range(n)) + [self._zs_ax])]
        factors += [self._expand(self.q_specific[i], [i, self._z_ax(i)]) for i in range(n)]
        return _product(factors, log_space)

    def generative_table(self, log_space: bool = False) -> np.ndarray:
        """p(x1..xN, z1..zN, zs) laid out over (x.., z.., zs)."""
        n = self.n_languages
        factors = [self._expand(self.prior_shared, [self._zs_ax])]
        for i in range(n):
            factors.append(self._expand(self.prior_specific[i], [self._z_ax(i)]))
            factors.append(self._expand(self.decoders[i], [self._z_ax(i), self._zs_ax, self._x_ax(i)]))
        return _product(factors, log_space)

    def variables(self) -> list[tuple[str, int]]:
        n = self.n_languages
        return ([(f"X{i + 1}", self.x_sizes[i]) for i in range(n)]
                + [(f"Z{i + 1}", self.z_sizes[i]) for i in range(n)]
                + [("ZS", self.zs_size)])

    def inference_joint(self, log_space: bool = False) -> DiscreteJoint:
        """p_D(x) q(z1|x1)...q(zN|xN) q(zs|x1..xN) as a DiscreteJoint."""
        n = self.n_languages
        pd = self._expand(self.p_data, list(range(n)))
        if log_space:
            with np.errstate(divide="ignore"):
                table = np.exp(np.log(pd) + np.log(self.posterior_table()))
        else:
            table = pd * self.posterior_table()
        return DiscreteJoint(self.variables(), table)


def _product(factors: list[np.ndarray], log_space: bool) -> np.ndarray:
    if log_space:
        with np.errstate(divide="ignore"):
            acc = sum(np.log(f) for f in factors)
        return np.exp(acc)
    acc = factors[0]
    for f in factors[1:]:
        acc = acc * f
    return acc


def random_factored_model(seed: int | np.random.Generator, n_languages: int = 2,
                          max_alphabet: int = 3, exact_posterior: bool = False) -> FactoredModel:
    """Random model: alphabet sizes uniform on {2..max_alphabet}, Dirichlet(1) rows.

    With ``exact_posterior`` the decoders ignore ``zs`` and q is set to the true
    posterior of p, which then factorizes exactly.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    n = n_languages
    lo = 2 if max_alphabet >= 2 else 1
    xs = tuple(int(v) for v in rng.integers(lo, max_alphabet + 1, size=n))
    zsz = tuple(int(v) for v in rng.integers(lo, max_alphabet + 1, size=n))
    zs = int(rng.integers(lo, max_alphabet + 1))
    p_data = rng.dirichlet(np.ones(int(np.prod(xs)))).reshape(xs)
    prior_specific = [rng.dirichlet(np.ones(zsz[i])) for i in range(n)]
    prior_shared = rng.dirichlet(np.ones(zs))
    r_shift = [_dirichlet_rows(rng, (xs[i],), zs) for i in range(n)]
    if exact_posterior:
        decoders = []
        q_specific = []
        for i in range(n):
            dec = _dirichlet_rows(rng, (zsz[i],), xs[i])
            decoders.append(np.repeat(dec[:, None, :], zs, axis=1))
            joint = prior_specific[i][:, None] * dec
            q_specific.append((joint / joint.sum(axis=0, keepdims=True)).T.copy())
        q_shared = np.broadcast_to(prior_shared, xs + (zs,)).copy()
    else:
        decoders = [_dirichlet_rows(rng, (zsz[i], zs), xs[i]) for i in range(n)]
        q_specific = [_dirichlet_rows(rng, (xs[i],), zsz[i]) for i in range(n)]
        q_shared = _dirichlet_rows(rng, xs, zs)
    return FactoredModel(p_data, q_specific, q_shared, r_shift, prior_specific, prior_shared, decoders)


# ---------------------------------------------------------------------------
# identities


def _complement(M_or_J, i: int) -> list[str]:
    n = M_or_J.n_languages if isinstance(M_or_J, FactoredModel) else sum(
        1 for name in M_or_J.names if name.startswith("X"))
    return [f"X{j + 1}" for j in range(n) if j != i]


def _joint(M) -> DiscreteJoint:
    if isinstance(M, DiscreteJoint):
        return M
    if not isinstance(M, FactoredModel):
        raise InvalidModel(f"expected FactoredModel or DiscreteJoint, got {type(M).__name__}")
    return M.inference_joint()


def _check_index(M, i: int) -> None:
    n = M.n_languages if isinstance(M, FactoredModel) else sum(1 for v in M.names if v.startswith("X"))
    if not 0 <= i < n:
        raise InvalidModel(f"language index {i} outside 0..{n - 1}")


def verify_latent_overlap(M, i: int) -> float:
    """|I(Zi;ZS) - (-I(Xi;Zi,ZS) + I(Xi;Zi) + I(Xi;ZS))| (``i`` is 0-based)."""
    _check_index(M, i)
    J = _joint(M)
    x, z = f"X{i + 1}", f"Z{i + 1}"
    lhs = mutual_information(J, z, "ZS")
    rhs = (-mutual_information(J, x, [z, "ZS"]) + mutual_information(J, x, z)
           + mutual_information(J, x, "ZS"))
    return abs(lhs - rhs)


@dataclass(frozen=True)
class ChainRuleTerms:
    conditional_mi: float   # I(Zi;ZS|Xi), zero under the factorization
    identity_residual: float  # general three-term identity, holds for any joint
    lhs: float
    rhs: float


def verify_chain_rule(M, i: int) -> ChainRuleTerms:
    """I(Zi;ZS) = I(Zi;Xi) - I(Zi;Xi|ZS) + I(Zi;ZS|Xi), plus the vanishing term."""
    _check_index(M, i)
    J = _joint(M)
    x, z = f"X{i + 1}", f"Z{i + 1}"
    cmi = conditional_mi(J, z, "ZS", x)
    lhs = mutual_information(J, z, "ZS")
    rhs = mutual_information(J, z, x) - conditional_mi(J, z, x, "ZS") + cmi
    return ChainRuleTerms(cmi, abs(lhs - rhs), lhs, rhs)


@dataclass(frozen=True)
class CommonInfoResiduals:
    expansion: float
    combined: float
    interaction: float  # I(Xi; X-bar-i; ZS)


def verify_common_information(M, i: int) -> CommonInfoResiduals:
    """Residuals of the common-information expansion and the combined identity.

    The interaction information on the left is computed by inclusion-exclusion
    over entropies, independently of the conditional-MI route on the right.
    """
    _check_index(M, i)
    J = _joint(M)
    rest = _complement(M, i)
    if not rest:
        raise InvalidModel("need at least two observed variables")
    x, z = f"X{i + 1}", f"Z{i + 1}"
    inter = interaction_information_entropies(J, x, rest, "ZS")
    expansion_rhs = mutual_information(J, x, "ZS") - conditional_mi(J, x, "ZS", rest)
    lhs_c = inter - mutual_information(J, z, "ZS")
    rhs_c = (-conditional_mi(J, x, "ZS", rest) + mutual_information(J, x, [z, "ZS"])
            - mutual_information(J, x, z))
    return CommonInfoResiduals(abs(inter - expansion_rhs), abs(lhs_c - rhs_c), inter)


# ---------------------------------------------------------------------------
# bounds


@dataclass(frozen=True)
class BoundCheck:
    exact: float
    bound: float
    extra: dict = field(default_factory=dict)

    @property
    def gap(self) -> float:
        return self.exact - self.bound


def _kl_rows(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """KL over the last axis, with 0 log 0 = 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * (np.log(p) - np.log(q)), 0.0)
    return terms.sum(axis=-1)


def _safe_log(a: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(a)


def verify_bounds(M: FactoredModel, lambdas: Sequence[float] = (1e-3, 1.0)) -> dict[str, BoundCheck]:
    """Exact value, bound value and gap for every variational bound.

    Keys: ``elbo``; ``shift_kl[i]``, ``reconstruction[i]``, ``vib[i]`` per
    language (1-based); ``disentangle_combined`` for the summed disentanglement
    bound; ``objective[lam]`` for the combined objective at each trade-off weight.
    """
    n = M.n_languages
    J = M.inference_joint()
    xs_axes = tuple(range(n))
    z_axes = tuple(range(n, 2 * n + 1))
    pd = M.p_data
    post = M.posterior_table()
    gen = M.generative_table()
    p_x = gen.sum(axis=z_axes)  # marginal likelihood of the generative model
    log_gen = _safe_log(gen)
    log_post = _safe_log(post)
    with np.errstate(invalid="ignore"):
        elbo_x = np.where(post > 0, post * (log_gen - log_post), 0.0).sum(axis=z_axes)
        true_post = gen / p_x.reshape(p_x.shape + (1,) * (n + 1))
    kl_post = np.where(post > 0, post * (log_post - _safe_log(true_post)), 0.0).sum(axis=z_axes)
    support = pd > 0
    exact_ll = float((pd[support] * np.log(p_x[support])).sum())
    elbo = float((pd[support] * elbo_x[support]).sum())
    kl_sum = float((pd[support] * kl_post[support]).sum())
    out: dict[str, BoundCheck] = {
        "elbo": BoundCheck(exact_ll, elbo, {"kl_sum": kl_sum, "kl_residual": abs((exact_ll - elbo) - kl_sum)}),
    }

    pd_zs = pd[..., None] * M.q_shared  # p_D(x) q(zs|x)
    H = [entropy(J, f"X{i + 1}") for i in range(n)]
    recon = []      # E_Q log p(xi | zi, zs)
    kl_spec = []    # E_pD KL(q(zi|xi) || p(zi))
    kl_shift = []   # E_pD KL(q(zs|x) || r_i(zs|xi))
    for i in range(n):
        xi, zi = f"X{i + 1}", f"Z{i + 1}"
        rest = _complement(M, i)
        # shift-shared KL: -I(Xi;ZS|rest) >= -E KL(q(zs|x) || r_i(zs|xi))
        r_full = M.r_shift[i].reshape(tuple(M.x_sizes[i] if a == i else 1 for a in range(n)) + (M.zs_size,))
        ekl = float((pd * _kl_rows(M.q_shared, np.broadcast_to(r_full, M.q_shared.shape))).sum())
        kl_shift.append(ekl)
        cmi = conditional_mi(J, xi, "ZS", rest) if rest else mutual_information(J, xi, "ZS")
        # the two readings of the dropped residual term
        p_xi = pd.sum(axis=tuple(a for a in range(n) if a != i))
        q_zs_xi = pd_zs.sum(axis=tuple(a for a in range(n) if a != i))
        with np.errstate(invalid="ignore", divide="ignore"):
            q_zs_xi = np.where(p_xi[:, None] > 0, q_zs_xi / p_xi[:, None], 1.0 / M.zs_size)
        reading_xi = float((p_xi * _kl_rows(q_zs_xi, M.r_shift[i])).sum())
        q_zs_rest = pd_zs.sum(axis=i, keepdims=True)
        p_rest = pd.sum(axis=i, keepdims=True)[..., None]
        with np.errstate(invalid="ignore", divide="ignore"):
            q_zs_rest = np.where(p_rest > 0, q_zs_rest / p_rest, 1.0 / M.zs_size)
        # bound with a variational table that conditions on the complement,
        # set to the exact q(zs | rest): tight by construction
        ekl_rest = float((pd * _kl_rows(M.q_shared, np.broadcast_to(q_zs_rest, M.q_shared.shape))).sum())
        out[f"shift_kl[{i + 1}]"] = BoundCheck(-cmi, -ekl, {
            "residual_reading_xi": reading_xi,
            "complement_bound": -ekl_rest,
            "complement_gap": -cmi + ekl_rest,
        })

        # reconstruction: I(Xi; Zi, ZS) >= H(Xi) + E log p(xi|zi,zs)
        marg = J.marginal([xi, zi, "ZS"]).table  # (xi, zi, zs)
        dec = np.transpose(M.decoders[i], (2, 0, 1))  # (xi, zi, zs)
        e_log = float(np.where(marg > 0, marg * _safe_log(dec), 0.0).sum())
        recon.append(e_log)
        out[f"reconstruction[{i + 1}]"] = BoundCheck(mutual_information(J, xi, [zi, "ZS"]), H[i] + e_log)

        # information bottleneck: -I(Xi;Zi) >= -E KL(q(zi|xi) || p(zi))
        p_xi_only = J.marginal([xi]).table
        kl_i = float((p_xi_only * _kl_rows(M.q_specific[i], M.prior_specific[i][None, :])).sum())
        kl_spec.append(kl_i)
        out[f"vib[{i + 1}]"] = BoundCheck(-mutual_information(J, xi, zi), -kl_i)

    kl_shared = float((pd * _kl_rows(M.q_shared, np.broadcast_to(M.prior_shared, M.q_shared.shape))).sum())
    disent_exact = 0.0
    for i in range(n):
        xi, zi = f"X{i + 1}", f"Z{i + 1}"
        rest = _complement(M, i)
        inter = interaction_information(J, xi, rest, "ZS") if rest else 0.0
        disent_exact += inter - mutual_information(J, zi, "ZS")
    disent_bound = sum(recon) - sum(kl_shift) - sum(kl_spec) + sum(H)
    out["disentangle_combined"] = BoundCheck(disent_exact, disent_bound)

    for lam in lambdas:
        exact = elbo + lam * disent_exact
        bound = ((1 + lam) * sum(recon) - (1 + lam) * sum(kl_spec) - kl_shared
                 - lam * sum(kl_shift))
        out[f"objective[{lam:g}]"] = BoundCheck(exact, bound, {"elbo_decomposition_residual":
                                                          abs(elbo - (sum(recon) - sum(kl_spec) - kl_shared))})
    return out


def shift_kl_complement_bound(M: FactoredModel, i: int, r_rest: np.ndarray) -> BoundCheck:
    """First-term bound with a variational table conditioned on the other programs.

    ``r_rest`` has shape ``x_sizes`` without axis ``i``, plus ``(|ZS|,)``.  This
    reading is a valid lower bound on -I(Xi;ZS|rest) for any such table.
    """
    _check_index(M, i)
    n = M.n_languages
    r_rest = np.asarray(r_rest, dtype=np.float64)
    expect = tuple(s for a, s in enumerate(M.x_sizes) if a != i) + (M.zs_size,)
    if r_rest.shape != expect:
        raise InvalidModel(f"r_rest shape {r_rest.shape}, expected {expect}")
    _check_rows("r_rest", r_rest)
    J = M.inference_joint()
    rest = _complement(M, i)
    cmi = conditional_mi(J, f"X{i + 1}", "ZS", rest)
    r_full = np.expand_dims(r_rest, axis=i)
    ekl = float((M.p_data * _kl_rows(M.q_shared, np.broadcast_to(r_full, M.q_shared.shape))).sum())
    return BoundCheck(-cmi, -ekl)


# ---------------------------------------------------------------------------
# batch suite used by the command line


@dataclass(frozen=True)
class SuiteRow:
    check: str
    worst: float
    tolerance: float
    kind: str  # "residual" (must be small) or "gap" (must be >= -tol)

    @property
    def passed(self) -> bool:
        if self.kind == "residual":
            return self.worst < self.tolerance
        return self.worst >= -self.tolerance


def suite_models(seed: int, cases: int) -> list[FactoredModel]:
    """``cases`` random models alternating N=2 and N=3, alphabets <= 3."""
    rng = np.random.default_rng(seed)
    return [random_factored_model(rng, n_languages=2 + (c % 2), max_alphabet=3) for c in range(cases)]


def run_suite(seed: int = 1, cases: int = 50, tol: float = 1e-10) -> list[SuiteRow]:
    models = suite_models(seed, cases)
    worst: dict[str, float] = {}
    kinds: dict[str, str] = {}

    def note(key: str, value: float, kind: str) -> None:
        kinds[key] = kind
        if key not in worst:
            worst[key] = value
        elif kind == "residual":
            worst[key] = max(worst[key], value)
        else:
            worst[key] = min(worst[key], value)

    for M in models:
        for i in range(M.n_languages):
            note("latent_overlap", verify_latent_overlap(M, i), "residual")
            a = verify_chain_rule(M, i)
            note("chain_rule.identity", a.identity_residual, "residual")
            note("chain_rule.cond_mi", abs(a.conditional_mi), "residual")
            r = verify_common_information(M, i)
            note("common_info.expansion", r.expansion, "residual")
            note("common_info.combined", r.combined, "residual")
        b = verify_bounds(M)
        note("elbo.gap", b["elbo"].gap, "gap")
        note("elbo.gap_equals_kl", b["elbo"].extra["kl_residual"], "residual")
        for key, chk in b.items():
            if key == "elbo":
                continue
            base = key.split("[")[0]
            if base == "objective":
                base = key
            note(f"{base}.gap", chk.gap, "gap")
    return [SuiteRow(k, worst[k], tol, kinds[k]) for k in worst]
