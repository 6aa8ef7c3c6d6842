"""Left-to-right hidden Markov models with diagonal-Gaussian emissions.

States allow only a self-loop or a single-step advance; every sequence
is forced to enter at the first state and exit from the last one.
Observation sequences are plain (T, dim) float arrays. All sequence
arithmetic runs in the log domain.

Defaults follow common phoneme-model practice: five emitting states and
25-dimensional frames; one Gaussian per state (no mixtures) with a
variance floor of 1e-4.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ContractError, InfeasiblePathError

VAR_FLOOR = 1e-4
DEFAULT_STATES = 5
DEFAULT_DIM = 25

_LOG2PI = math.log(2.0 * math.pi)


def as_sequence(seq) -> np.ndarray:
    arr = np.asarray(seq, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ContractError(f"observation sequence must be a non-empty (T, dim) array, got shape {arr.shape}")
    return arr


@dataclass(eq=False)
class GaussianHmm:
    """trans is (n, n) row-stochastic with zeros off the self/advance band;
    means and vars are (n, dim) with vars floored at VAR_FLOOR."""

    trans: np.ndarray
    means: np.ndarray
    vars: np.ndarray

    def __post_init__(self):
        self.trans = np.asarray(self.trans, dtype=np.float64)
        self.means = np.asarray(self.means, dtype=np.float64)
        self.vars = np.asarray(self.vars, dtype=np.float64)
        n = self.trans.shape[0]
        if self.trans.shape != (n, n):
            raise ContractError("transition matrix must be square")
        if self.means.shape != self.vars.shape or self.means.shape[0] != n:
            raise ContractError("means/vars must be (n_states, dim) and match the transition matrix")
        rows = self.trans.sum(axis=1)
        if np.any(np.abs(rows - 1.0) > 1e-9):
            raise ContractError(f"transition rows must sum to 1, got {rows}")
        band = np.triu(np.tril(np.ones((n, n)), 1))  # self-loop and advance only
        if np.any(self.trans[band == 0] != 0.0):
            raise ContractError("left-to-right topology allows only self-loop or advance transitions")
        if np.any(self.vars < VAR_FLOOR - 1e-15):
            raise ContractError(f"variances must be >= {VAR_FLOOR}")

    @property
    def n_states(self) -> int:
        return self.trans.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def copy(self) -> "GaussianHmm":
        return GaussianHmm(self.trans.copy(), self.means.copy(), self.vars.copy())


@dataclass(eq=False)
class AcousticModel:
    """One HMM per phoneme; all members share the frame dimension."""

    hmms: dict

    def __post_init__(self):
        if not self.hmms:
            raise ContractError("acoustic model needs at least one phoneme")
        dims = {h.dim for h in self.hmms.values()}
        if len(dims) != 1:
            raise ContractError(f"all phoneme models must share dim, got {sorted(dims)}")

    @property
    def dim(self) -> int:
        return next(iter(self.hmms.values())).dim

    @property
    def phonemes(self) -> list:
        return sorted(self.hmms)


def flat_start(sequences, n_states: int) -> GaussianHmm:
    """Initialize every state from the global moments of all frames.

    Transitions start at self-loop 0.6 / advance 0.4 (final state
    self-loop 1.0); variances are floored.
    """
    if n_states < 1:
        raise ContractError("n_states must be >= 1")
    seqs = [as_sequence(s) for s in sequences]
    if not seqs:
        raise ContractError("flat start needs at least one sequence")
    frames = np.concatenate(seqs, axis=0)
    mean = frames.mean(axis=0)
    var = np.maximum(frames.var(axis=0), VAR_FLOOR)
    trans = np.zeros((n_states, n_states))
    for s in range(n_states - 1):
        trans[s, s] = 0.6
        trans[s, s + 1] = 0.4
    trans[n_states - 1, n_states - 1] = 1.0
    return GaussianHmm(trans, np.tile(mean, (n_states, 1)), np.tile(var, (n_states, 1)))


def log_emissions(model: GaussianHmm, seq: np.ndarray) -> np.ndarray:
    """(T, n_states) log-density matrix under each state's diagonal Gaussian."""
    if seq.shape[1] != model.dim:
        raise ContractError(f"sequence dim {seq.shape[1]} != model dim {model.dim}")
    const = -0.5 * (model.dim * _LOG2PI + np.log(model.vars).sum(axis=1))
    diff = seq[:, None, :] - model.means[None, :, :]
    quad = -0.5 * (diff * diff / model.vars[None, :, :]).sum(axis=2)
    return const[None, :] + quad


def _log_trans(model: GaussianHmm):
    with np.errstate(divide="ignore"):
        lt = np.log(model.trans)
    stay = np.diag(lt).copy()
    adv = np.array([lt[s, s + 1] for s in range(model.n_states - 1)])
    return stay, adv


def viterbi(model: GaussianHmm, seq) -> tuple[list, float]:
    """Most probable state path (0-based indices) and its joint log-probability.

    Entry is forced at state 0 and the path must end in the final state;
    sequences shorter than n_states cannot reach it.
    """
    seq = as_sequence(seq)
    n = model.n_states
    T = seq.shape[0]
    if T < n:
        raise InfeasiblePathError(f"sequence length {T} < minimum path length {n}")
    logb = log_emissions(model, seq)
    stay, adv = _log_trans(model)
    delta = np.full((T, n), -np.inf)
    choice = np.zeros((T, n), dtype=np.int8)  # 1 = arrived by advance
    delta[0, 0] = logb[0, 0]
    for t in range(1, T):
        from_stay = delta[t - 1] + stay
        from_adv = np.full(n, -np.inf)
        from_adv[1:] = delta[t - 1, :-1] + adv
        choice[t] = from_adv > from_stay
        delta[t] = logb[t] + np.maximum(from_stay, from_adv)
    score = delta[T - 1, n - 1]
    if not np.isfinite(score):
        raise InfeasiblePathError("no feasible path reaches the final state")
    path = [n - 1]
    s = n - 1
    for t in range(T - 1, 0, -1):
        if choice[t, s]:
            s -= 1
        path.append(s)
    path.reverse()
    return path, float(score)


def forward_loglik(model: GaussianHmm, seq) -> float:
    """Log-probability of the sequence summed over all feasible paths."""
    seq = as_sequence(seq)
    n = model.n_states
    T = seq.shape[0]
    if T < n:
        raise InfeasiblePathError(f"sequence length {T} < minimum path length {n}")
    logb = log_emissions(model, seq)
    stay, adv = _log_trans(model)
    alpha = np.full(n, -np.inf)
    alpha[0] = logb[0, 0]
    for t in range(1, T):
        from_adv = np.full(n, -np.inf)
        from_adv[1:] = alpha[:-1] + adv
        alpha = logb[t] + np.logaddexp(alpha + stay, from_adv)
    if not np.isfinite(alpha[n - 1]):
        raise InfeasiblePathError("no feasible path reaches the final state")
    return float(alpha[n - 1])


def posteriors(model: GaussianHmm, seq):
    """Forward-backward state and transition posteriors.

    Returns ``(gamma, xi, loglik)`` where gamma is (T, n) with
    gamma[t, s] = P(state_t = s | seq) and xi is (T-1, n, n) with mass
    only on the self-loop and advance entries.
    """
    seq = as_sequence(seq)
    n = model.n_states
    T = seq.shape[0]
    if T < n:
        raise InfeasiblePathError(f"sequence length {T} < minimum path length {n}")
    logb = log_emissions(model, seq)
    stay, adv = _log_trans(model)
    log_alpha = np.full((T, n), -np.inf)
    log_alpha[0, 0] = logb[0, 0]
    for t in range(1, T):
        from_adv = np.full(n, -np.inf)
        from_adv[1:] = log_alpha[t - 1, :-1] + adv
        log_alpha[t] = logb[t] + np.logaddexp(log_alpha[t - 1] + stay, from_adv)
    loglik = log_alpha[T - 1, n - 1]
    if not np.isfinite(loglik):
        raise InfeasiblePathError("no feasible path reaches the final state")
    log_beta = np.full((T, n), -np.inf)
    log_beta[T - 1, n - 1] = 0.0
    for t in range(T - 2, -1, -1):
        via_stay = stay + logb[t + 1] + log_beta[t + 1]
        via_adv = np.full(n, -np.inf)
        via_adv[:-1] = adv + logb[t + 1, 1:] + log_beta[t + 1, 1:]
        log_beta[t] = np.logaddexp(via_stay, via_adv)
    gamma = np.exp(log_alpha + log_beta - loglik)
    xi = np.zeros((T - 1, n, n))
    for t in range(T - 1):
        xi_stay = np.exp(log_alpha[t] + stay + logb[t + 1] + log_beta[t + 1] - loglik)
        np.fill_diagonal(xi[t], xi_stay)
        xi_adv = np.exp(log_alpha[t, :-1] + adv + logb[t + 1, 1:] + log_beta[t + 1, 1:] - loglik)
        for s in range(n - 1):
            xi[t, s, s + 1] = xi_adv[s]
    return gamma, xi, float(loglik)


def _check_monotone(name: str, prev: float | None, new: float) -> None:
    if prev is not None and new < prev - 1e-8 * max(1.0, abs(prev)):
        raise ArithmeticError(f"{name} log-likelihood decreased: {prev} -> {new}")


def _reestimate_trans(model, stay_counts, adv_counts):
    n = model.n_states
    trans = model.trans.copy()
    for s in range(n):
        out = stay_counts[s] + (adv_counts[s] if s < n - 1 else 0.0)
        if out > 0:
            trans[s, :] = 0.0
            trans[s, s] = stay_counts[s] / out
            if s < n - 1:
                trans[s, s + 1] = adv_counts[s] / out
    return trans


def viterbi_train(model: GaussianHmm, sequences, iters: int) -> GaussianHmm:
    """Hard-EM: align each sequence by Viterbi, then re-estimate moments
    and transition counts from the alignment.

    The total Viterbi log-likelihood is non-decreasing across iterations;
    a decrease beyond 1e-8 relative slack raises ArithmeticError. States
    that receive no frames keep their previous parameters.
    """
    seqs = [as_sequence(s) for s in sequences]
    if not seqs:
        raise ContractError("viterbi_train needs at least one sequence")
    model = model.copy()
    n, d = model.n_states, model.dim
    prev_total = None
    for _ in range(iters):
        total = 0.0
        sums = np.zeros((n, d))
        sqs = np.zeros((n, d))
        counts = np.zeros(n)
        stay_counts = np.zeros(n)
        adv_counts = np.zeros(n - 1)
        for seq in seqs:
            path, score = viterbi(model, seq)
            total += score
            p = np.array(path)
            np.add.at(sums, p, seq)
            np.add.at(sqs, p, seq * seq)
            np.add.at(counts, p, 1.0)
            moved = p[1:] != p[:-1]
            np.add.at(stay_counts, p[:-1][~moved], 1.0)
            np.add.at(adv_counts, p[:-1][moved], 1.0)
        _check_monotone("viterbi", prev_total, total)
        prev_total = total
        hit = counts > 0
        means = model.means.copy()
        vars_ = model.vars.copy()
        means[hit] = sums[hit] / counts[hit, None]
        vars_[hit] = np.maximum(sqs[hit] / counts[hit, None] - means[hit] ** 2, VAR_FLOOR)
        model = GaussianHmm(_reestimate_trans(model, stay_counts, adv_counts), means, vars_)
    if iters > 0:
        final = sum(viterbi(model, s)[1] for s in seqs)
        _check_monotone("viterbi", prev_total, final)
    return model


def baum_welch(model: GaussianHmm, sequences, iters: int) -> GaussianHmm:
    """Soft-EM with forward-backward posteriors.

    The total forward log-likelihood is non-decreasing across iterations
    (1e-8 relative slack); states with negligible posterior mass keep
    their previous parameters.
    """
    seqs = [as_sequence(s) for s in sequences]
    if not seqs:
        raise ContractError("baum_welch needs at least one sequence")
    model = model.copy()
    n, d = model.n_states, model.dim
    prev_total = None
    for _ in range(iters):
        total = 0.0
        g_sum = np.zeros(n)
        o_sum = np.zeros((n, d))
        o_sq = np.zeros((n, d))
        stay_counts = np.zeros(n)
        adv_counts = np.zeros(n - 1)
        for seq in seqs:
            gamma, xi, ll = posteriors(model, seq)
            total += ll
            g_sum += gamma.sum(axis=0)
            o_sum += gamma.T @ seq
            o_sq += gamma.T @ (seq * seq)
            stay_counts += xi.sum(axis=0).diagonal()
            adv_counts += np.array([xi[:, s, s + 1].sum() for s in range(n - 1)])
        _check_monotone("forward", prev_total, total)
        prev_total = total
        hit = g_sum > 1e-12
        means = model.means.copy()
        vars_ = model.vars.copy()
        means[hit] = o_sum[hit] / g_sum[hit, None]
        vars_[hit] = np.maximum(o_sq[hit] / g_sum[hit, None] - means[hit] ** 2, VAR_FLOOR)
        model = GaussianHmm(_reestimate_trans(model, stay_counts, adv_counts), means, vars_)
    if iters > 0:
        final = sum(forward_loglik(model, s) for s in seqs)
        _check_monotone("forward", prev_total, final)
    return model


def train_acoustic_model(corpus: dict, n_states: int = DEFAULT_STATES,
                         iters: int = 5, tune_iters: int = 0) -> AcousticModel:
    """Flat-start then Viterbi-train one HMM per phoneme; optional
    Baum-Welch tuning passes afterwards."""
    hmms = {}
    for phoneme in sorted(corpus):
        m = flat_start(corpus[phoneme], n_states)
        m = viterbi_train(m, corpus[phoneme], iters)
        if tune_iters:
            m = baum_welch(m, corpus[phoneme], tune_iters)
        hmms[phoneme] = m
    return AcousticModel(hmms)
