"""Evaluation metrics for ad hoc teamwork under equivalence mappings.

Every metric runs in one of two modes:

``"exact"``
    Expected returns come from full game-tree enumeration.  Expectations
    over a symmetry group either enumerate the group (when it is small) or
    use the uniform-image law: for a policy that always plays action ``c``,
    relabelling by a uniformly drawn group element yields the constant
    policy ``k`` with probability ``P(op(c) = k)``.  Policies that a
    relabelling cannot change (e.g. uniform random) are left as is.  If
    neither side of a pair has one of these forms and the group is too big
    to enumerate, a ``ValueError`` asks for Monte Carlo mode.

``"monte_carlo"`` (alias ``"mc"``)
    Episodes are sampled; group elements are drawn per episode.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core_env import Policy, episode_rng, expected_return_exact, run_episode
from .symmetry import augment_policy

ENUMERATION_LIMIT = 5040


@dataclass(frozen=True)
class MetricReport:
    value: float
    stderr: float | None
    sample_count: int
    mode: str

    def __post_init__(self):
        if self.mode == "exact" and self.stderr is not None:
            raise ValueError("exact reports carry no standard error")
        if self.mode == "monte_carlo" and self.sample_count < 2:
            raise ValueError("Monte Carlo reports need at least two samples")

    @property
    def exact(self) -> bool:
        return self.mode == "exact"

    def __float__(self):
        return float(self.value)


def _mode(mode: str) -> str:
    if mode in ("exact",):
        return "exact"
    if mode in ("mc", "monte_carlo"):
        return "monte_carlo"
    raise ValueError(f"unknown mode {mode!r}; expected 'exact' or 'monte_carlo'")


def _seed(rng) -> int:
    if rng is None:
        return 0
    if isinstance(rng, (int, np.integer)):
        return int(rng)
    return int(rng.integers(2**63))


class ConstantPolicy(Policy):
    def __init__(self, action: int, num_actions: int):
        self.action = int(action)
        if not 0 <= self.action < num_actions:
            raise ValueError(f"action {action} outside 0..{num_actions - 1}")
        self._probs = np.zeros(num_actions)
        self._probs[self.action] = 1.0

    def action_distribution(self, aoh):
        return self._probs

    def act(self, aoh, rng):
        return self.action

    def constant_action(self):
        return self.action


def _seatings(env, aht, teammate):
    n = env.num_agents
    for seat in range(n):
        joint = [teammate] * n
        joint[seat] = aht
        yield joint


def _j_aht_exact(env, aht, teammate) -> float:
    vals = [expected_return_exact(env, joint) for joint in _seatings(env, aht, teammate)]
    return sum(vals) / len(vals)


def j_aht(env, aht_policy: Policy, teammate: Policy, mode: str = "exact", n_episodes: int = 10_000, rng=None) -> MetricReport:
    """Expected AHT return, averaged over the seat the AHT policy occupies."""
    mode = _mode(mode)
    if mode == "exact":
        return MetricReport(_j_aht_exact(env, aht_policy, teammate), None, 0, mode)
    seed = _seed(rng)
    cells = []
    for seat, joint in enumerate(_seatings(env, aht_policy, teammate)):
        cells.append([run_episode(env, joint, episode_rng(seed, seat * n_episodes + k)).discounted_return
                      for k in range(n_episodes)])
    return _stratified(cells)


def _stratified(cells) -> MetricReport:
    """Mean of per-cell means; stderr combines per-cell standard errors."""
    cells = [np.asarray(c, dtype=float) for c in cells]
    means = np.array([c.mean() for c in cells])
    var = np.array([c.var(ddof=1) / len(c) for c in cells])
    total = sum(len(c) for c in cells)
    return MetricReport(float(means.mean()), float(math.sqrt(var.sum()) / len(cells)), total, "monte_carlo")


def crossplay(env, a: Policy, b: Policy, mode: str = "exact", n_episodes: int = 10_000, rng=None) -> MetricReport:
    """Seat-averaged return of ``a`` paired with ``b``."""
    return j_aht(env, a, b, mode=mode, n_episodes=n_episodes, rng=rng)


def _orbit(policy, group, num_actions):
    """Law of ``augment_policy(policy, op)`` for uniform ``op``, if known in closed form."""
    if policy.is_relabel_invariant():
        return [(policy, 1.0)]
    c = policy.constant_action()
    if c is None:
        return None
    # augment(const c, op) plays op^-1(c); op^-1 is uniform whenever op is
    law = group.action_image_distribution(0, c)
    return [(ConstantPolicy(k, num_actions), p) for k, p in law.items() if p > 0.0]


def _group_values(env, aht, teammate, group, value_fn, enumeration_limit):
    """``[(value_fn(augment(aht, op), teammate), weight)]`` over uniform ``op``."""
    if group.enumerable(enumeration_limit):
        elems = group.elements()
        w = 1.0 / len(elems)
        return [(value_fn(augment_policy(aht, op), teammate), w) for op in elems]
    num_actions = env.num_actions(0)
    orbit = _orbit(aht, group, num_actions)
    if orbit is not None:
        return [(value_fn(p, teammate), w) for p, w in orbit]
    # swap the relabelling onto the teammate: J(aug(x, op), y) == J(x, aug(y, op^-1))
    orbit = _orbit(teammate, group, num_actions)
    if orbit is not None:
        return [(value_fn(aht, p), w) for p, w in orbit]
    raise ValueError(
        f"no closed form for the group expectation ({group.description}, size {group.size}); "
        "use mode='monte_carlo'"
    )


def robustness(env, aht_policy: Policy, eval_pop, group=None, mode: str = "exact", n_episodes: int = 2_000,
               rng=None, enumeration_limit: int = ENUMERATION_LIMIT) -> MetricReport:
    """Mean AHT return against every evaluation member.

    With ``group`` the AHT policy is additionally relabelled by a uniformly
    drawn group element.
    """
    mode = _mode(mode)
    members = list(eval_pop)
    if mode == "exact":
        total = 0.0
        for m in members:
            if group is None:
                total += _j_aht_exact(env, aht_policy, m)
            else:
                vals = _group_values(env, aht_policy, m, group, lambda a, b: _j_aht_exact(env, a, b), enumeration_limit)
                total += sum(v * w for v, w in vals)
        return MetricReport(total / len(members), None, 0, mode)
    seed = _seed(rng)
    cells = []
    cell = 0
    for m in members:
        for seat in range(env.num_agents):
            returns = []
            for k in range(n_episodes):
                erng = episode_rng(seed, cell * n_episodes + k)
                pol = aht_policy if group is None else augment_policy(aht_policy, group.sample(erng))
                joint = [m] * env.num_agents
                joint[seat] = pol
                returns.append(run_episode(env, joint, erng).discounted_return)
            cells.append(returns)
            cell += 1
    return _stratified(cells)


def augmentation_difference(env, a: Policy, b: Policy, op, mode: str = "exact", n_episodes: int = 10_000,
                            rng=None) -> MetricReport:
    """``J_XP(a, b) - J_XP(augment(a, op), b)``."""
    mode = _mode(mode)
    aug = augment_policy(a, op)
    if mode == "exact":
        return MetricReport(_j_aht_exact(env, a, b) - _j_aht_exact(env, aug, b), None, 0, mode)
    seed = _seed(rng)
    base = crossplay(env, a, b, mode, n_episodes, seed)
    other = crossplay(env, aug, b, mode, n_episodes, seed + 1)
    return MetricReport(base.value - other.value, math.hypot(base.stderr, other.stderr),
                        base.sample_count + other.sample_count, mode)


@dataclass(frozen=True)
class AugImpBudget:
    phi_samples: int = 1000
    include_self_pairs: bool = True


def _table_key(policy):
    table = getattr(policy, "table", None)
    if table is None:
        return None
    return np.asarray(table).tobytes()


def augmentation_impact(env, pop, group, budget: AugImpBudget | None = None, mode: str = "exact", rng=None,
                        enumeration_limit: int = ENUMERATION_LIMIT, return_rows: bool = False):
    """Expected absolute change in crossplay when the first policy of a pair is relabelled.

    Pairs ``(i, j)`` are enumerated over the population, including ``i == j``
    unless ``budget.include_self_pairs`` is false.  Returns a
    :class:`MetricReport`, or ``(report, rows)`` with ``return_rows``; rows
    are ``(policy_i, policy_j, phi_id, xp_base, xp_aug, abs_diff)`` where
    ``phi_id`` is ``"analytic"`` for closed-form expectations.
    """
    mode = _mode(mode)
    budget = budget or AugImpBudget()
    members = list(pop)
    pairs = [(i, j) for i in range(len(members)) for j in range(len(members))
             if budget.include_self_pairs or i != j]
    xp_cache: dict = {}

    def xp(a, b, jb):
        ka = _table_key(a)
        if ka is None:
            return _j_aht_exact(env, a, b)
        key = (ka, jb)
        if key not in xp_cache:
            xp_cache[key] = _j_aht_exact(env, a, b)
        return xp_cache[key]

    rows = []
    if mode == "exact":
        per_pair = []
        for i, j in pairs:
            a, b = members[i], members[j]
            base = xp(a, b, j)
            if group.enumerable(enumeration_limit):
                elems = group.elements()
                diffs = []
                for k, op in enumerate(elems):
                    v = xp(augment_policy(a, op), b, j)
                    diffs.append(abs(v - base))
                    if return_rows:
                        rows.append((a.name, b.name, str(k), base, v, abs(v - base)))
                per_pair.append(sum(diffs) / len(diffs))
                continue
            vals = _group_values(env, a, b, group, lambda x, y: _j_aht_exact(env, x, y), enumeration_limit)
            mean_abs = sum(w * abs(v - base) for v, w in vals)
            per_pair.append(mean_abs)
            if return_rows:
                rows.append((a.name, b.name, "analytic", base, sum(w * v for v, w in vals), mean_abs))
        report = MetricReport(float(np.mean(per_pair)), None, 0, mode)
        return (report, rows) if return_rows else report

    if budget.phi_samples < 2:
        raise ValueError("Monte Carlo AugImp needs phi_samples >= 2")
    gen = np.random.default_rng(_seed(rng))
    ops = [group.sample(gen) for _ in range(budget.phi_samples)]
    augmented: dict = {}
    cells = []
    for i, j in pairs:
        a, b = members[i], members[j]
        base = xp(a, b, j)
        diffs = np.empty(len(ops))
        for k, op in enumerate(ops):
            if (i, k) not in augmented:
                augmented[(i, k)] = augment_policy(a, op)
            v = xp(augmented[(i, k)], b, j)
            diffs[k] = abs(v - base)
            if return_rows:
                rows.append((a.name, b.name, str(k), base, v, diffs[k]))
        cells.append(diffs)
    report = _stratified(cells)
    return (report, rows) if return_rows else report


def paired_permutation_test(samples_a, samples_b, n_resamples: int = 100_000, rng=None, exact: bool = False) -> float:
    """Two-sided paired sign-flip permutation test on the mean difference.

    ``exact=True`` enumerates all ``2**n`` sign patterns and returns the
    exact proportion.  Otherwise ``n_resamples`` random sign patterns are
    drawn and ``(count + 1) / (n_resamples + 1)`` is returned.
    """
    a = np.asarray(samples_a, dtype=float)
    b = np.asarray(samples_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"paired samples must be 1-d with equal length, got {a.shape} and {b.shape}")
    if len(a) < 2:
        raise ValueError("need at least two pairs")
    d = a - b
    n = len(d)
    observed = abs(d.mean())
    slack = 1e-12 * max(1.0, observed)
    if exact:
        if n > 24:
            raise ValueError("exact enumeration is limited to 24 pairs")
        signs = np.array(list(itertools.product((1.0, -1.0), repeat=n)))
        stats = np.abs(signs @ d) / n
        return float(np.count_nonzero(stats >= observed - slack) / len(signs))
    gen = np.random.default_rng(rng)
    count = 0
    chunk = 10_000
    done = 0
    while done < n_resamples:
        m = min(chunk, n_resamples - done)
        signs = gen.integers(0, 2, size=(m, n)) * 2.0 - 1.0
        stats = np.abs(signs @ d) / n
        count += int(np.count_nonzero(stats >= observed - slack))
        done += m
    return (count + 1) / (n_resamples + 1)
