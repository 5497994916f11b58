"""Monte-Carlo evaluation of the spectral-efficiency bounds.

Samples raw channels and the training observation jointly, applies the LMMSE
estimators, and assembles (i) the use-and-then-forget term groups that mirror
the closed-form lower bound and (ii) the sampled upper bounds. This module is
the independent side of the dual-route check: it never touches the
closed-form tables in cfsim.se.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import LargeScaleState, draw_channels
from .estimation import EstimationState, PilotBook
from .se import delta_term


def _copilot_weights(book: PilotBook, eta_train):
    """M[k, i] = sqrt(eta_i) if users k and i share a pilot else 0."""
    same = book.assignment[:, None] == book.assignment[None, :]
    return same * np.sqrt(np.asarray(eta_train, dtype=float))[None, :]


def joint_chunks(ls, est, book, rng, n_samples, chunk=2048):
    """Yield (g, g_hat) chunks of jointly sampled channels and LMMSE estimates.

    g has shape (S, K, A, N). The training noise is drawn per pilot sequence
    (users sharing a pilot see the same projected noise, as the projection of
    one common W_a realization dictates).
    """
    K, A, N = ls.steering.shape
    M = _copilot_weights(book, est.eta_train)
    pidx = book.assignment
    n_pilots = book.tau_p
    done = 0
    while done < n_samples:
        s = min(chunk, n_samples - done)
        g = draw_channels(ls, rng, s)
        noise = np.sqrt(est.sigma_w2 / 2.0) * (
            rng.standard_normal((s, n_pilots, A, N))
            + 1j * rng.standard_normal((s, n_pilots, A, N))
        )
        y_hat = np.einsum("ki,sian->skan", M, g) + noise[:, pidx]
        g_hat = np.einsum("kanm,skam->skan", est.D, y_hat)
        yield g, g_hat
        done += s


def _dl_cross(g, g_hat, root_eta_dl):
    """cross[s, k, j] = sum_a sqrt(eta_dl[j,a]) g_{k,a}^H ghat_{j,a}."""
    return np.einsum("skan,ja,sjan->skj", np.conj(g), root_eta_dl, g_hat)


def _ul_cross(g, g_hat, mask):
    """cross[s, k, j] = sum_{a in A_k} ghat_{k,a}^H g_{j,a}, plus sum_{a in A_k} ||ghat||^2."""
    cross = np.einsum("skan,ka,sjan->skj", np.conj(g_hat), mask, g)
    norms = np.einsum("skan,ka->sk", np.abs(g_hat) ** 2, mask)
    return cross, norms


def _batched(n_samples, batch_count):
    base = n_samples // batch_count
    if base == 0:
        return [n_samples]
    sizes = [base] * batch_count
    sizes[-1] += n_samples - base * batch_count
    return sizes


@dataclass(frozen=True)
class UatfResult:
    """MC estimates of the UatF term groups and the assembled SE bound."""

    se: np.ndarray  # (K,)
    se_stderr: np.ndarray  # (K,)
    sinr: np.ndarray  # (K,)
    desired: np.ndarray  # (K,) complex  E[D_k]
    gain_var: np.ndarray  # (K,)          E|B_k|^2
    interference: np.ndarray  # (K, K)    E|I_{k,j}|^2 (diagonal zero)
    noise_term: np.ndarray  # (K,)        sigma^2 (DL) or E|N_k|^2 (UL)


def uatf_dl_mc(
    ls: LargeScaleState,
    est: EstimationState,
    book: PilotBook,
    serving,
    eta_dl,
    sigma_z2,
    prelog,
    n_samples,
    rng,
    batch_count=20,
    chunk=2048,
):
    """Sampled use-and-then-forget terms for the downlink bound."""
    K = ls.n_users
    eta = np.where(serving, np.asarray(eta_dl, dtype=float), 0.0)
    root = np.sqrt(eta)
    batch_se = []
    sum_c = np.zeros((K, K), dtype=complex)
    sum_c2 = np.zeros((K, K))
    for size in _batched(n_samples, batch_count):
        bc = np.zeros((K, K), dtype=complex)
        bc2 = np.zeros((K, K))
        for g, g_hat in joint_chunks(ls, est, book, rng, size, chunk):
            cross = _dl_cross(g, g_hat, root)
            bc += cross.sum(axis=0)
            bc2 += (np.abs(cross) ** 2).sum(axis=0)
        sum_c += bc
        sum_c2 += bc2
        batch_se.append(_assemble_dl(bc / size, bc2 / size, sigma_z2, prelog))
    mean_c = sum_c / n_samples
    mean_c2 = sum_c2 / n_samples
    se = _assemble_dl(mean_c, mean_c2, sigma_z2, prelog)
    stderr = np.std(np.array(batch_se), axis=0, ddof=1) / np.sqrt(len(batch_se))

    desired = np.diag(mean_c).copy()
    gain_var = np.diag(mean_c2) - np.abs(desired) ** 2
    interference = mean_c2.copy()
    np.fill_diagonal(interference, 0.0)
    sinr = np.abs(desired) ** 2 / (gain_var + interference.sum(axis=1) + sigma_z2)
    return UatfResult(
        se=se,
        se_stderr=stderr,
        sinr=sinr,
        desired=desired,
        gain_var=gain_var,
        interference=interference,
        noise_term=np.full(K, sigma_z2),
    )


def _assemble_dl(mean_c, mean_c2, sigma_z2, prelog):
    desired = np.abs(np.diag(mean_c)) ** 2
    gain_var = np.diag(mean_c2) - desired
    inter = mean_c2.copy()
    np.fill_diagonal(inter, 0.0)
    sinr = desired / (gain_var + inter.sum(axis=1) + sigma_z2)
    return prelog * np.log2(1.0 + sinr)


def uatf_ul_mc(
    ls: LargeScaleState,
    est: EstimationState,
    book: PilotBook,
    serving,
    eta_ul,
    prelog,
    n_samples,
    rng,
    batch_count=20,
    chunk=2048,
):
    """Sampled use-and-then-forget terms for the uplink bound."""
    K = ls.n_users
    eta = np.asarray(eta_ul, dtype=float)
    mask = np.asarray(serving, dtype=float)
    batch_se = []
    sum_c = np.zeros((K, K), dtype=complex)
    sum_c2 = np.zeros((K, K))
    sum_n = np.zeros(K)
    for size in _batched(n_samples, batch_count):
        bc = np.zeros((K, K), dtype=complex)
        bc2 = np.zeros((K, K))
        bn = np.zeros(K)
        for g, g_hat in joint_chunks(ls, est, book, rng, size, chunk):
            cross, norms = _ul_cross(g, g_hat, mask)
            bc += cross.sum(axis=0)
            bc2 += (np.abs(cross) ** 2).sum(axis=0)
            bn += norms.sum(axis=0)
        sum_c += bc
        sum_c2 += bc2
        sum_n += bn
        batch_se.append(
            _assemble_ul(bc / size, bc2 / size, bn / size, eta, est.sigma_w2, prelog)
        )
    mean_c = sum_c / n_samples
    mean_c2 = sum_c2 / n_samples
    mean_n = sum_n / n_samples
    se = _assemble_ul(mean_c, mean_c2, mean_n, eta, est.sigma_w2, prelog)
    stderr = np.std(np.array(batch_se), axis=0, ddof=1) / np.sqrt(len(batch_se))

    desired = np.sqrt(eta) * np.diag(mean_c)
    gain_var = eta * (np.diag(mean_c2) - np.abs(np.diag(mean_c)) ** 2)
    interference = eta[None, :] * mean_c2
    np.fill_diagonal(interference, 0.0)
    noise = est.sigma_w2 * mean_n
    sinr = np.abs(desired) ** 2 / (gain_var + interference.sum(axis=1) + noise)
    return UatfResult(
        se=se,
        se_stderr=stderr,
        sinr=sinr,
        desired=desired,
        gain_var=gain_var,
        interference=interference,
        noise_term=noise,
    )


def _assemble_ul(mean_c, mean_c2, mean_n, eta, sigma_w2, prelog):
    desired = eta * np.abs(np.diag(mean_c)) ** 2
    gain_var = eta * (np.diag(mean_c2) - np.abs(np.diag(mean_c)) ** 2)
    inter = eta[None, :] * mean_c2
    np.fill_diagonal(inter, 0.0)
    sinr = desired / (gain_var + inter.sum(axis=1) + sigma_w2 * mean_n)
    return prelog * np.log2(1.0 + sinr)


@dataclass(frozen=True)
class UbResult:
    se: np.ndarray  # (K,)
    se_stderr: np.ndarray  # (K,)


def se_ub_dl_mc(
    ls,
    est,
    book,
    serving,
    eta_dl,
    sigma_z2,
    prelog,
    n_samples,
    rng,
    batch_count=20,
    chunk=2048,
    literal_no_log=False,
):
    """Sampled downlink upper bound E[log2(1 + instantaneous SINR)].

    literal_no_log evaluates the printed E[1 + SINR] form instead.
    """
    K = ls.n_users
    eta = np.where(serving, np.asarray(eta_dl, dtype=float), 0.0)
    root = np.sqrt(eta)
    sums = np.zeros(K)
    batch_means = []
    for size in _batched(n_samples, batch_count):
        bsum = np.zeros(K)
        for g, g_hat in joint_chunks(ls, est, book, rng, size, chunk):
            cross = _dl_cross(g, g_hat, root)
            num = np.abs(np.einsum("skk->sk", cross)) ** 2
            tot = (np.abs(cross) ** 2).sum(axis=2)
            sinr = num / (tot - num + sigma_z2)
            val = (1.0 + sinr) if literal_no_log else np.log2(1.0 + sinr)
            bsum += val.sum(axis=0)
        sums += bsum
        batch_means.append(prelog * bsum / size)
    se = prelog * sums / n_samples
    stderr = np.std(np.array(batch_means), axis=0, ddof=1) / np.sqrt(len(batch_means))
    return UbResult(se=se, se_stderr=stderr)


def se_ub_ul_mc(
    ls,
    est,
    book,
    serving,
    eta_ul,
    prelog,
    n_samples,
    rng,
    batch_count=20,
    chunk=2048,
    literal_no_log=False,
):
    """Sampled uplink upper bound."""
    K = ls.n_users
    eta = np.asarray(eta_ul, dtype=float)
    mask = np.asarray(serving, dtype=float)
    sums = np.zeros(K)
    batch_means = []
    for size in _batched(n_samples, batch_count):
        bsum = np.zeros(K)
        for g, g_hat in joint_chunks(ls, est, book, rng, size, chunk):
            cross, norms = _ul_cross(g, g_hat, mask)
            pw = eta[None, None, :] * np.abs(cross) ** 2
            num = np.einsum("skk->sk", pw)
            tot = pw.sum(axis=2)
            sinr = num / (tot - num + est.sigma_w2 * norms)
            val = (1.0 + sinr) if literal_no_log else np.log2(1.0 + sinr)
            bsum += val.sum(axis=0)
        sums += bsum
        batch_means.append(prelog * bsum / size)
    se = prelog * sums / n_samples
    stderr = np.std(np.array(batch_means), axis=0, ddof=1) / np.sqrt(len(batch_means))
    return UbResult(se=se, se_stderr=stderr)


def draw_single_pair(beta, rice_k, steering, rng, n):
    """n Ricean draws for one (user, AP) pair, shape (n, N)."""
    N = len(steering)
    h = (rng.standard_normal((n, N)) + 1j * rng.standard_normal((n, N))) / np.sqrt(2.0)
    theta = rng.uniform(0.0, 2.0 * np.pi, size=n)
    return np.sqrt(beta / (rice_k + 1.0)) * (
        np.sqrt(rice_k) * np.exp(1j * theta)[:, None] * steering[None, :] + h
    )


def fourth_moment_check(beta, rice_k, steering, D, n_samples, rng, batch_count=20):
    """Sampled E|g^H D g|^2 against the closed-form delta + tr(D G D^H G).

    Returns (sampled_mean, stderr, analytic).
    """
    from .estimation import covariance_G

    G = covariance_G(beta, rice_k, np.asarray(steering))
    analytic = delta_term(beta, rice_k, np.asarray(steering), D) + float(
        np.trace(D @ G @ D.conj().T @ G).real
    )
    vals = []
    for size in _batched(n_samples, batch_count):
        g = draw_single_pair(beta, rice_k, np.asarray(steering), rng, size)
        quad = np.einsum("sn,nm,sm->s", np.conj(g), D, g)
        vals.append(np.mean(np.abs(quad) ** 2))
    vals = np.array(vals)
    sampled = vals.mean()
    stderr = vals.std(ddof=1) / np.sqrt(len(vals))
    return sampled, stderr, analytic
