"""Morris elementary-effects screening over one-at-a-time trajectories."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np



@dataclass(frozen=True)
class EEResult:
    """Elementary-effect statistics per (output, input).

    mu is the signed mean of the r effects, mu_star the mean absolute effect
    (robust to sign cancellation), sigma_ee their standard deviation.
    """

    mu: np.ndarray  # K x l
    mu_star: np.ndarray  # K x l
    sigma_ee: np.ndarray  # K x l
    r: int
    delta: float
    output_names: list
    input_names: list

    @property
    def k(self) -> int:
        return self.mu.shape[0]

    @property
    def l(self) -> int:
        return self.mu.shape[1]


def elementary_effects(f, trajectories: list, specs: list, output_names: list = None) -> EEResult:
    """Compute EE statistics of a unit-cube-input model over trajectories.

    ``f`` maps a unit-cube point (length l) to a vector of K outputs; any
    physical scaling happens inside f.  Each trajectory contributes one
    effect per input: (f(after) - f(before)) / signed_step.
    """
    if not trajectories:
        raise ValueError("need at least one trajectory")
    l = trajectories[0].l
    if len(specs) != l:
        raise ValueError(f"trajectories have dimension {l} but {len(specs)} input specs given")
    effects = None  # r x K x l
    rows = []
    for t_i, traj in enumerate(trajectories):
        try:
            vals = np.array([np.atleast_1d(np.asarray(f(pt), dtype=float)) for pt in traj.points])
        except Exception as exc:
            raise RuntimeError(f"model evaluation failed on trajectory {t_i}: {exc}") from exc
        k = vals.shape[1]
        per_input = np.empty((k, l))
        steps = traj.signed_steps()
        for move, v in enumerate(traj.varied_index):
            per_input[:, v] = (vals[move + 1] - vals[move]) / steps[move]
        rows.append(per_input)
    effects = np.array(rows)  # r x K x l
    r = effects.shape[0]
    mu = effects.mean(axis=0)
    mu_star = np.abs(effects).mean(axis=0)
    sigma_ee = effects.std(axis=0, ddof=1) if r > 1 else np.zeros_like(mu)
    return EEResult(
        mu=mu,
        mu_star=mu_star,
        sigma_ee=sigma_ee,
        r=r,
        delta=trajectories[0].delta,
        output_names=output_names or [f"y{i}" for i in range(mu.shape[0])],
        input_names=[s.name for s in specs],
    )


def rank_inputs(result: EEResult, output: int) -> list:
    """Input indices for one output, most important first.

    Sorted by mu_star descending, ties broken by sigma_ee descending, then by
    input index.
    """
    keys = [
        (-result.mu_star[output, v], -result.sigma_ee[output, v], v) for v in range(result.l)
    ]
    return [v for _, _, v in sorted(keys)]


EE_CSV_HEADER = ["output", "input", "mu", "mu_star", "sigma"]


def ee_report(result: EEResult = None) -> str:
    """CSV of per-(output, input) statistics plus a ranked summary block."""
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(EE_CSV_HEADER)
    if result is None:
        return buf.getvalue()
    for i in range(result.k):
        for v in range(result.l):
            w.writerow(
                [
                    result.output_names[i],
                    result.input_names[v],
                    f"{result.mu[i, v]:.12g}",
                    f"{result.mu_star[i, v]:.12g}",
                    f"{result.sigma_ee[i, v]:.12g}",
                ]
            )
    return buf.getvalue()


def ee_ranking_text(result: EEResult) -> str:
    lines = []
    for i in range(result.k):
        order = rank_inputs(result, i)
        names = " > ".join(result.input_names[v] for v in order)
        lines.append(f"{result.output_names[i]}: {names}")
    return "\n".join(lines)


def ee_plot_data(result: EEResult) -> str:
    """Whitespace table for external plotting: output input mu mu_star sigma."""
    lines = ["# output input mu mu_star sigma"]
    for i in range(result.k):
        for v in range(result.l):
            lines.append(
                f"{result.output_names[i]} {result.input_names[v]} "
                f"{result.mu[i, v]:.12g} {result.mu_star[i, v]:.12g} {result.sigma_ee[i, v]:.12g}"
            )
    return "\n".join(lines) + "\n"


def parse_ee_report(text: str) -> EEResult:
    """Rebuild an EEResult from :func:`ee_report` output (r is not recoverable)."""
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != EE_CSV_HEADER:
        raise ValueError("not an elementary-effects report")
    body = rows[1:]
    outputs, inputs = [], []
    for row in body:
        if row[0] not in outputs:
            outputs.append(row[0])
        if row[1] not in inputs:
            inputs.append(row[1])
    k, l = len(outputs), len(inputs)
    mu = np.zeros((k, l))
    mu_star = np.zeros((k, l))
    sigma = np.zeros((k, l))
    for row in body:
        i, v = outputs.index(row[0]), inputs.index(row[1])
        mu[i, v], mu_star[i, v], sigma[i, v] = float(row[2]), float(row[3]), float(row[4])
    return EEResult(mu, mu_star, sigma, r=0, delta=np.nan, output_names=outputs, input_names=inputs)
