"""Closed-form ground truth for the building-block scenarios, and the oracle-vs-engine regression gate.

Each OracleEntry holds an exact formula (params, instance) -> value, the
instance it is checked at, which engine route estimates it, and a provenance
string. Entries whose commonly quoted short form is not exact say when that form holds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import integrate

from pwshap._rng import derive_seed
from pwshap.causal_graph import single_path_for
from pwshap.pwshap_engine import PwshapSettings, coalition_effect, integration_check, path_effect
from pwshap.scenarios import DEFAULT_PARAMS, build_scenario
from pwshap.shapley_engine import Coalition, causal_shapley_split, coalition_shapley_value, full_shapley

KINDS = ("psi", "path", "path_alt", "phi_coalition", "phi_coalition_causal", "cs_direct", "cs_indirect",
         "cs_direct_total", "cs_indirect_total", "cond_mean", "integral", "integral_alt")


class OracleError(KeyError):
    pass


@dataclass(frozen=True)
class OracleEntry:
    scenario: str
    quantity: str
    kind: str
    formula: Callable
    inputs: dict
    provenance: str
    members: tuple = ()          # coalition for psi / phi / cs_*; conditioned-on names for cond_mean
    target: str = ""             # path covariate, or the variable whose mean is taken
    params: dict = field(default_factory=dict)
    conditioning: tuple = ()     # integral: names held at their instance values (conditioned on)
    fixed: tuple = ()            # integral: names overwritten without conditioning

    def value(self, params=None, inputs=None) -> float:
        p = dict(DEFAULT_PARAMS[self.scenario])
        p.update(self.params)
        p.update(params or {})
        x = dict(self.inputs)
        x.update(inputs or {})
        return float(self.formula(p, x))


# ---------------------------------------------------------------- helpers for the formulas

def _k(p):
    a = p["alpha"]
    return (a + 1.0) / (a + 2.0)


def _mixed_c1_mean(t, d, q):
    """E[C1 | T=t, D=d, Q=q] with C1 ~ U(0,1), Q|C1 ~ Bern(1-C1), T|C1 ~ Bern(C1), D|T,C1 ~ Bern(0.8-0.3(T+C1))."""
    return _mixed_c1_mean_cached(float(t), float(d), float(q))


@lru_cache(maxsize=64)
def _mixed_c1_mean_cached(t, d, q):
    def dens(c):
        pt = c if t == 1.0 else 1.0 - c
        pq = (1.0 - c) if q == 1.0 else c
        pd1 = 0.8 - 0.3 * (t + c)
        pd = pd1 if d == 1.0 else 1.0 - pd1
        return pt * pq * pd

    num = integrate.quad(lambda c: c * dens(c), 0.0, 1.0, epsabs=1e-13, epsrel=1e-12)[0]
    den = integrate.quad(dens, 0.0, 1.0, epsabs=1e-13, epsrel=1e-12)[0]
    return num / den


def _dep_q_mean(t, d):
    return (7 - 4 * d) / (13 - 6 * d) if t == 1 else (4 + 2 * d) / (7 + 6 * d)


def _needs_uniform_c1(p):
    if p.get("c1_law", "uniform") != "uniform":
        raise OracleError("mixed-scenario C1 oracles are derived for c1_law='uniform'")


# ---------------------------------------------------------------- the table

def _moderation():
    x = {"C1": 0.3, "C2": 0.8, "T": 1.0}
    x0 = {"C1": 0.9, "C2": 0.2, "T": 0.0}
    S = "moderation"
    src = "moderation building block"
    cate = lambda p, x: p["beta"] + p["alpha1"] * x["C1"] + p["alpha2"] * x["C2"]
    cate1 = lambda p, x: p["beta"] + p["alpha1"] * x["C1"] + p["alpha2"] / 2
    cate2 = lambda p, x: p["beta"] + p["alpha1"] / 2 + p["alpha2"] * x["C2"]
    ate = lambda p, x: p["beta"] + p["alpha1"] / 2 + p["alpha2"] / 2
    w = lambda p, x: x["T"] - p["p"]
    return [
        OracleEntry(S, "psi[C1,C2]", "psi", cate, x, "main text: Psi_{T->Y|C1,C2} = beta + a1 c1 + a2 c2",
                    ("C1", "C2")),
        OracleEntry(S, "psi[]", "psi", ate, x, "main text: base effect beta + a1/2 + a2/2", ()),
        OracleEntry(S, "path[C1]", "path", lambda p, x: p["alpha1"] * (x["C1"] - 0.5), x,
                    "main text: Psi_C1 = a1 (c1 - 1/2)", target="C1"),
        OracleEntry(S, "path[C2]", "path", lambda p, x: p["alpha2"] * (x["C2"] - 0.5), x0,
                    "main text: Psi_C2 = a2 (c2 - 1/2)", target="C2"),
        OracleEntry(S, "phi_coalition[C1,C2]", "phi_coalition", lambda p, x: w(p, x) * cate(p, x), x,
                    f"{src}: (t - p)(beta + a1 c1 + a2 c2)", ("C1", "C2")),
        OracleEntry(S, "phi_coalition[C1]", "phi_coalition", lambda p, x: w(p, x) * cate1(p, x), x0,
                    f"{src}: (t - p)(beta + a1 c1 + a2/2)", ("C1",)),
        OracleEntry(S, "phi_coalition[C2]", "phi_coalition", lambda p, x: w(p, x) * cate2(p, x), x,
                    f"{src}: (t - p)(beta + a1/2 + a2 c2)", ("C2",)),
        OracleEntry(S, "phi_coalition[]", "phi_coalition", lambda p, x: w(p, x) * ate(p, x), x0,
                    f"{src}: (t - p)(beta + a1/2 + a2/2)", ()),
        OracleEntry(S, "phi_coalition_causal[C1]", "phi_coalition_causal", lambda p, x: w(p, x) * cate1(p, x), x,
                    f"{src}: causal term equals the observational one, (t - p)(beta + a1 c1 + a2/2)", ("C1",)),
        OracleEntry(S, "cs_direct_total", "cs_direct_total",
                    lambda p, x: w(p, x) * (p["beta"] + p["alpha1"] / 2 * (x["C1"] + 0.5)
                                            + p["alpha2"] / 2 * (x["C2"] + 0.5)), x,
                    "main text: causal Shapley direct part (t - p){beta + a1/2 (c1 + 1/2) + a2/2 (c2 + 1/2)}"),
        OracleEntry(S, "cs_indirect_total", "cs_indirect_total", lambda p, x: 0.0, x,
                    "null indirect part of causal Shapley when T has no feature descendants"),
        OracleEntry(S, "mean path[C1]", "integral", lambda p, x: 0.0, x,
                    "moderating effects integrate to 0 under randomised treatment", target="C1"),
    ]


def _bias():
    x = {"C1": 0.7, "C2": 0.25, "T": 1.0}
    x0 = {"C1": 0.4, "C2": 0.6, "T": 0.0}
    S = "bias"
    src = "bias building block"
    k = _k
    pa = lambda p, c1: c1 ** p["alpha"]
    pt = lambda p: 1.0 / (p["alpha"] + 1.0)
    return [
        OracleEntry(S, "path[C1]", "path",
                    lambda p, x: p["alpha1"] * (x["C1"] - k(p)) - p["gamma1"] * k(p) / 2, x,
                    f"{src}: Psi_C1 = a1 (c1 - (a+1)/(a+2)) - g1 (a+1)/(2(a+2))", target="C1"),
        OracleEntry(S, "path[C2]", "path", lambda p, x: p["alpha2"] * (x["C2"] - 0.5), x0,
                    f"{src}: Psi_C2 = a2 (c2 - 1/2)", target="C2"),
        OracleEntry(S, "psi[]", "psi",
                    lambda p, x: p["beta"] + p["gamma1"] * k(p) / 2 + p["alpha1"] * k(p) + p["alpha2"] / 2, x,
                    f"{src}: base effect beta + g1 (a+1)/(2(a+2)) + a1 (a+1)/(a+2) + a2/2", ()),
        OracleEntry(S, "psi[C1]", "psi", lambda p, x: p["beta"] + p["alpha1"] * x["C1"] + p["alpha2"] / 2, x,
                    f"{src}: E[Y|T=1,c1] - E[Y|T=0,c1] = beta + a1 c1 + a2/2", ("C1",)),
        OracleEntry(S, "psi[C2]", "psi",
                    lambda p, x: p["beta"] + p["gamma1"] * k(p) / 2 + p["alpha1"] * k(p) + p["alpha2"] * x["C2"],
                    x0, f"{src}: beta + g1 (a+1)/(2(a+2)) + a1 (a+1)/(a+2) + a2 c2", ("C2",)),
        OracleEntry(S, "psi[C1,C2]", "psi", lambda p, x: p["beta"] + p["alpha1"] * x["C1"] + p["alpha2"] * x["C2"],
                    x, f"{src}: beta + a1 c1 + a2 c2", ("C1", "C2")),
        OracleEntry(S, "E[T|C1]", "cond_mean", lambda p, x: pa(p, x["C1"]), x, f"{src}: E[T|c1] = c1^a",
                    ("C1",), "T"),
        OracleEntry(S, "E[T|C2]", "cond_mean", lambda p, x: pt(p), x, f"{src}: E[T|c2] = 1/(a+1)", ("C2",), "T"),
        OracleEntry(S, "E[C1|T]", "cond_mean", lambda p, x: k(p) if x["T"] == 1 else k(p) / 2, x,
                    f"{src}: E[C1|T=1] = (a+1)/(a+2), E[C1|T=0] = (a+1)/(2(a+2))", ("T",), "C1"),
        OracleEntry(S, "E[C1|T]@0", "cond_mean", lambda p, x: k(p) if x["T"] == 1 else k(p) / 2, x0,
                    f"{src}: E[C1|T=0] = (a+1)/(2(a+2))", ("T",), "C1"),
        OracleEntry(S, "E[C1|C2,T]", "cond_mean", lambda p, x: k(p) if x["T"] == 1 else k(p) / 2, x,
                    f"{src}: E[C1|c2,T=1] = (a+1)/(a+2)", ("C2", "T"), "C1"),
        OracleEntry(S, "cs_direct[C1,C2]", "cs_direct",
                    lambda p, x: (x["T"] - pa(p, x["C1"])) * (p["beta"] + p["alpha1"] * x["C1"]
                                                              + p["alpha2"] * x["C2"]), x,
                    f"{src}: (t - c1^a)(beta + a1 c1 + a2 c2)", ("C1", "C2")),
        OracleEntry(S, "cs_direct[C1]", "cs_direct",
                    lambda p, x: (x["T"] - pa(p, x["C1"])) * (p["beta"] + p["alpha1"] * x["C1"] + p["alpha2"] / 2),
                    x0, f"{src}: beta (t - c1^a) + a1 c1 (t - c1^a) + a2 (t/2 - c1^a/2)", ("C1",)),
        OracleEntry(S, "cs_direct[C2]", "cs_direct",
                    lambda p, x: (p["beta"] + p["alpha2"] * x["C2"]) * (x["T"] - pt(p))
                    + p["alpha1"] * (x["T"] / 2 - 1 / (p["alpha"] + 2)), x,
                    f"{src}: beta (t - 1/(a+1)) + a2 c2 (t - 1/(a+1)) + a1 (t/2 - 1/(a+2))", ("C2",)),
        OracleEntry(S, "cs_direct[]", "cs_direct",
                    lambda p, x: p["beta"] * (x["T"] - pt(p)) + p["alpha1"] * (x["T"] / 2 - 1 / (p["alpha"] + 2))
                    + p["alpha2"] * (x["T"] / 2 - pt(p) / 2), x0,
                    f"{src}: beta (t - 1/(a+1)) + a1 (t/2 - 1/(a+2)) + a2 (t/2 - 1/(2(a+1)))", ()),
        OracleEntry(S, "cs_indirect[C1]", "cs_indirect", lambda p, x: 0.0, x,
                    "null indirect part (T has no feature descendants)", ("C1",)),
        OracleEntry(S, "cs_direct_total", "cs_direct_total",
                    lambda p, x: p["beta"] * (x["T"] - pa(p, x["C1"]) / 2 - pt(p) / 2)
                    + p["alpha1"] * (x["C1"] / 2 * (x["T"] - pa(p, x["C1"])) + 0.5 * (x["T"] / 2 - 1 / (p["alpha"] + 2)))
                    + p["alpha2"] * ((x["C2"] / 3 + 1 / 12) * (x["T"] - pa(p, x["C1"]))
                                     + (x["C2"] / 6 + 1 / 6) * (x["T"] - pt(p))), x,
                    f"{src}: causal Shapley direct part (last bracket is "
                    "(c2/6 + 1/6)(t - 1/(a+1)))"),
        OracleEntry(S, "mean path[C2]", "integral", lambda p, x: 0.0, x,
                    "integration of the local confounding effect of a non-confounder is 0", target="C2"),
        OracleEntry(S, "mean path[C1]", "integral",
                    lambda p, x: p["alpha1"] * (0.5 - k(p)) - p["gamma1"] * k(p) / 2, x,
                    f"{src}: E[Psi_C1] != 0 for the confounder (derived with E[C1] = 1/2)",
                    target="C1"),
    ]


def _mediation():
    x = {"Q": 0.3, "D": 1.0, "T": 1.0}
    x0 = {"Q": 0.8, "D": 0.0, "T": 0.0}
    S = "mediation"
    src = "mediation building block"
    ind = lambda p, x: (p["alpha_D"] + p["alpha_DT"] * x["T"]) * (0.3 - 0.6 * x["T"])
    return [
        OracleEntry(S, "psi[Q,D]", "psi", lambda p, x: p["alpha_T"] + p["alpha_DT"] * x["D"] + p["alpha_QT"] * x["Q"],
                    x, f"{src}: CDE(d,q) = aT + aDT d + aQT q", ("Q", "D")),
        OracleEntry(S, "psi[D]", "psi", lambda p, x: p["alpha_T"] + p["alpha_DT"] * x["D"] + p["alpha_QT"] / 2,
                    x0, f"{src}: CDE(d) = aT + aDT d + aQT/2", ("D",)),
        OracleEntry(S, "psi[Q]", "psi",
                    lambda p, x: p["alpha_T"] + p["alpha_DT"] / 5 + p["alpha_QT"] * x["Q"] - 0.6 * p["alpha_D"], x,
                    f"{src}: CDE(q) = aT + aDT/5 + aQT q - 3 aD/5 (the -3aD/5 sign is the one consistent with "
                    "the path effect through D)", ("Q",)),
        OracleEntry(S, "psi[]", "psi",
                    lambda p, x: p["alpha_T"] - 0.6 * p["alpha_D"] + p["alpha_DT"] / 5 + p["alpha_QT"] / 2, x0,
                    f"{src}: base effect aT - 0.6 aD + aDT/5 + aQT/2", ()),
        OracleEntry(S, "path[D]", "path", lambda p, x: 0.6 * p["alpha_D"] + p["alpha_DT"] * (x["D"] - 0.2), x,
                    f"{src}: Psi_{{T->D->Y}} = 0.6 aD + aDT (d - 1/5)", target="D"),
        OracleEntry(S, "path[D]@0", "path", lambda p, x: 0.6 * p["alpha_D"] + p["alpha_DT"] * (x["D"] - 0.2), x0,
                    f"{src}: Psi_{{T->D->Y}} at d = 0", target="D"),
        OracleEntry(S, "path[Q]", "path", lambda p, x: p["alpha_QT"] * (x["Q"] - 0.5), x,
                    f"{src}: Psi_{{T->Q->Y}} = aQT (q - 1/2)", target="Q"),
        OracleEntry(S, "cs_direct[Q,D]", "cs_direct",
                    lambda p, x: (p["alpha_T"] + p["alpha_DT"] * x["D"] + p["alpha_QT"] * x["Q"]) * (x["T"] - 0.5),
                    x, f"{src}: (aT + aDT d + aQT q)(t - 1/2)", ("Q", "D")),
        OracleEntry(S, "cs_indirect[Q,D]", "cs_indirect", lambda p, x: 0.0, x, f"{src}: indirect part 0", ("Q", "D")),
        OracleEntry(S, "cs_direct[D]", "cs_direct",
                    lambda p, x: (p["alpha_T"] + p["alpha_DT"] * x["D"] + p["alpha_QT"] / 2) * (x["T"] - 0.5), x0,
                    f"{src}: (aT + aDT d + aQT/2)(t - 1/2)", ("D",)),
        OracleEntry(S, "cs_indirect[D]", "cs_indirect", lambda p, x: 0.0, x, f"{src}: indirect part 0", ("D",)),
        OracleEntry(S, "cs_direct[Q]", "cs_direct",
                    lambda p, x: p["alpha_T"] * (x["T"] - 0.5) + p["alpha_DT"] * (x["T"] / 2 - 0.1)
                    + p["alpha_QT"] * x["Q"] * (x["T"] - 0.5), x,
                    f"{src}: aT (t - 1/2) + aDT (t/2 - 1/10) + aQT q (t - 1/2)", ("Q",)),
        OracleEntry(S, "cs_indirect[Q]", "cs_indirect", ind, x,
                    f"{src}: indirect part (aD + aDT t)(3/10 - 3t/5); the short form "
                    "aD (3/10 - 3t/5) agrees only at t = 0 or aDT = 0", ("Q",)),
        OracleEntry(S, "cs_indirect[Q]@0", "cs_indirect", ind, x0,
                    f"{src}: indirect part at t = 0, where the short form aD (3/10 - 3t/5) is exact", ("Q",)),
        OracleEntry(S, "cs_direct[]", "cs_direct",
                    lambda p, x: p["alpha_T"] * (x["T"] - 0.5) + p["alpha_DT"] * (x["T"] / 2 - 0.1)
                    + p["alpha_QT"] / 2 * (x["T"] - 0.5), x0,
                    f"{src}: aT (t - 1/2) + aDT (t/2 - 1/10) + aQT/2 (t - 1/2)", ()),
        OracleEntry(S, "cs_indirect[]", "cs_indirect", ind, x,
                    f"{src}: indirect part of the empty coalition, corrected as for {{Q}}", ()),
        OracleEntry(S, "cs_direct_total", "cs_direct_total",
                    lambda p, x: p["alpha_T"] * (x["T"] - 0.5)
                    + p["alpha_DT"] * (x["D"] / 2 * (x["T"] - 0.5) + 0.5 * (x["T"] / 2 - 0.1))
                    + p["alpha_QT"] / 2 * (x["T"] - 0.5) * (x["Q"] + 0.5), x,
                    f"{src}: causal Shapley direct part"),
        OracleEntry(S, "cs_indirect_total", "cs_indirect_total", lambda p, x: ind(p, x) / 2, x,
                    f"{src}: causal Shapley indirect part aD/2 (3/10 - 3t/5), corrected to (aD + aDT t)/2 (...)"),
        OracleEntry(S, "E[D|T]", "cond_mean", lambda p, x: 0.8 - 0.6 * x["T"], x0,
                    "mediation setup: D | T=0 ~ Bern(0.8), D | T=1 ~ Bern(0.2)", ("T",), "D"),
        OracleEntry(S, "E[D|T]@1", "cond_mean", lambda p, x: 0.8 - 0.6 * x["T"], x,
                    "mediation setup: D | T=1 ~ Bern(0.2)", ("T",), "D"),
        OracleEntry(S, "mean path[Q]", "integral", lambda p, x: 0.0, x,
                    f"{src}: integral of Psi_{{T->Q->Y}} over q is 0", target="Q"),
        OracleEntry(S, "mean path[D]", "integral", lambda p, x: 0.6 * p["alpha_D"] + 0.3 * p["alpha_DT"], x,
                    f"{src}: integral of Psi_{{T->D->Y}} over d is nonzero (derived: E[D] = 1/2)", target="D"),
    ]


def _mixed():
    x = {"C1": 0.35, "C2": 1.0, "Q": 1.0, "D": 1.0, "T": 1.0}
    x0 = {"C1": 0.6, "C2": 0.0, "Q": 0.0, "D": 0.0, "T": 0.0}
    S = "mixed"
    src = "mixed confounders and mediators (C1 ~ U(0,1))"

    def full(p, x):
        return (p["alpha_T"] + p["alpha_DT"] * x["D"] + p["alpha_QT"] * x["Q"] + p["alpha_1T"] * x["C1"]
                + p["alpha_2T"] * x["C2"])

    def no_c1(p, x):
        _needs_uniform_c1(p)
        e1 = _mixed_c1_mean(1, x["D"], x["Q"])
        e0 = _mixed_c1_mean(0, x["D"], x["Q"])
        return (p["alpha_T"] + p["alpha_DT"] * x["D"] + p["alpha_QT"] * x["Q"] + p["alpha_2T"] * x["C2"]
                + p["alpha_1T"] * e1 + p["alpha_1"] * (e1 - e0))

    return [
        OracleEntry(S, "psi[C1,C2,Q,D]", "psi", full, x, f"{src}: aT + aDT d + aQT q + a1T c1 + a2T c2",
                    ("C1", "C2", "Q", "D")),
        OracleEntry(S, "psi[C1,C2,Q]", "psi",
                    lambda p, x: p["alpha_T"] + p["alpha_DT"] * (0.5 - 0.3 * x["C1"]) + p["alpha_QT"] * x["Q"]
                    + p["alpha_1T"] * x["C1"] + p["alpha_2T"] * x["C2"] - 0.3 * p["alpha_D"], x,
                    f"{src}: aT + aDT (1/2 - 3c1/10) + aQT q + a1T c1 + a2T c2 - 3aD/10", ("C1", "C2", "Q")),
        OracleEntry(S, "psi[C1,C2,D]", "psi",
                    lambda p, x: p["alpha_T"] + p["alpha_DT"] * x["D"] + p["alpha_QT"] * (1 - x["C1"])
                    + p["alpha_1T"] * x["C1"] + p["alpha_2T"] * x["C2"], x0,
                    f"{src}: aT + aDT d + aQT (1 - c1) + a1T c1 + a2T c2", ("C1", "C2", "D")),
        OracleEntry(S, "psi[C1,Q,D]", "psi", lambda p, x: full(p, x) - p["alpha_2T"] * (x["C2"] - 0.5), x,
                    f"{src}: aT + aDT d + aQT q + a1T c1 + a2T/2", ("C1", "Q", "D")),
        OracleEntry(S, "psi[C2,Q,D]", "psi", no_c1, x,
                    f"{src}: aT + aDT d + aQT q + a2T c2 + a1T E[C1|T=1,d,q] + a1 (E[C1|T=1,d,q] - E[C1|T=0,d,q]), "
                    "conditional means by quadrature", ("C2", "Q", "D")),
        OracleEntry(S, "path[Q]", "path", lambda p, x: p["alpha_QT"] * (x["Q"] - (1 - x["C1"])), x,
                    f"{src}: Psi_Q = aQT (q - (1 - c1))", target="Q"),
        OracleEntry(S, "path[D]", "path",
                    lambda p, x: 0.3 * p["alpha_D"] + p["alpha_DT"] * (x["D"] + 0.3 * x["C1"] - 0.5), x,
                    f"{src}: Psi_D = 3aD/10 + aDT (d + 3c1/10 - 1/2); the + aDT d term comes from the "
                    "full-coalition effect", target="D"),
        OracleEntry(S, "path[D]@0", "path",
                    lambda p, x: 0.3 * p["alpha_D"] + p["alpha_DT"] * (x["D"] + 0.3 * x["C1"] - 0.5), x0,
                    f"{src}: Psi_D at d = 0, where the aDT d term vanishes", target="D"),
        OracleEntry(S, "path[C2]", "path", lambda p, x: p["alpha_2T"] * (x["C2"] - 0.5), x,
                    f"{src}: Psi_C2 = a2T (c2 - 1/2)", target="C2"),
        OracleEntry(S, "path[C1]", "path", lambda p, x: full(p, x) - no_c1(p, x), x,
                    f"{src}: Psi_C1 = a1 (E[C1|T=0,d,q] - E[C1|T=1,d,q]) + a1T (c1 - E[C1|T=1,d,q])", target="C1"),
        OracleEntry(S, "E[C1|T,D,Q]", "cond_mean", lambda p, x: _mixed_c1_mean(x["T"], x["D"], x["Q"]), x,
                    f"{src}: E[C1|T=1,d,q] by quadrature", ("T", "D", "Q"), "C1"),
        OracleEntry(S, "E[C1|T,D,Q]@0", "cond_mean", lambda p, x: _mixed_c1_mean(x["T"], x["D"], x["Q"]), x0,
                    f"{src}: E[C1|T=0,d,q] by quadrature", ("T", "D", "Q"), "C1"),
        OracleEntry(S, "mean path[Q]|C1,C2", "integral", lambda p, x: 0.0, x,
                    f"{src}: E[Psi_Q | c1, c2] = 0", target="Q", conditioning=("C1", "C2")),
        OracleEntry(S, "mean path[D]|C1,C2", "integral",
                    lambda p, x: 0.3 * p["alpha_D"] + p["alpha_DT"] * (0.3 - 0.3 * x["C1"]), x,
                    f"{src}: E[Psi_D | c1, c2] != 0 (derived: E[D|c1] = 0.8 - 0.6 c1)", target="D",
                    conditioning=("C1", "C2")),
        OracleEntry(S, "mean path[C2]|d,q", "integral", lambda p, x: 0.0, x,
                    f"{src}: E[Psi_C2(C1, C2, d, q)] = 0 for fixed mediator values", target="C2",
                    fixed=("Q", "D")),
    ]


def _dependent():
    x = {"Q": 0.3, "D": 1.0, "T": 1.0}
    x0 = {"Q": 0.75, "D": 0.0, "T": 0.0}
    S = "dependent_mediators"
    src = "dependent mediators"
    gap = lambda d: -3.0 / ((13 - 6 * d) * (7 + 6 * d))
    psi_q = lambda p, x: (p["alpha_T"] + p["alpha_DT"] * (0.5 - 0.3 * x["Q"]) + p["alpha_QT"] * x["Q"]
                          - 0.3 * p["alpha_D"])
    psi_d = lambda p, x: (p["alpha_T"] + p["alpha_Q"] * gap(x["D"]) + p["alpha_DT"] * x["D"]
                          + p["alpha_QT"] * _dep_q_mean(1, x["D"]))
    psi_0 = lambda p, x: p["alpha_T"] + 7 * p["alpha_DT"] / 20 + p["alpha_QT"] / 2 - 0.3 * p["alpha_D"]
    full = lambda p, x: p["alpha_T"] + p["alpha_DT"] * x["D"] + p["alpha_QT"] * x["Q"]
    return [
        OracleEntry(S, "psi[Q,D]", "psi", full, x, f"{src}: aT + aDT d + aQT q", ("Q", "D")),
        OracleEntry(S, "psi[Q]", "psi", psi_q, x, f"{src}: aT + aDT (1/2 - 3q/10) + aQT q - 3aD/10", ("Q",)),
        OracleEntry(S, "psi[D]", "psi", psi_d, x,
                    f"{src}: aT - 3aQ/((13-6d)(7+6d)) + aDT d + aQT (7-4d)/(13-6d)", ("D",)),
        OracleEntry(S, "psi[D]@0", "psi", psi_d, x0, f"{src}: Psi_{{T->Y|D}} at d = 0", ("D",)),
        OracleEntry(S, "psi[]", "psi", psi_0, x,
                    f"{src}: aT + 7aDT/20 + aQT/2 - 3aD/10; the aQT term uses E[Q|T=1] = 1/2, not q", ()),
        OracleEntry(S, "path[Q]", "path", lambda p, x: full(p, x) - psi_d(p, x), x,
                    f"{src}: Psi_Q = aQT q + 3aQ/((13-6d)(7+6d)) - aQT (7-4d)/(13-6d)", target="Q"),
        OracleEntry(S, "path[D]", "path", lambda p, x: full(p, x) - psi_q(p, x), x0,
                    f"{src}: Psi_D = Psi_{{T->Y|D,Q}} - Psi_{{T->Y|Q}}", target="D"),
        OracleEntry(S, "path_alt[Q]", "path_alt",
                    lambda p, x: (x["Q"] - 0.5) * (p["alpha_QT"] - 0.3 * p["alpha_DT"]), x,
                    f"{src}: alternative Psi_Q = Psi_{{T->Y|Q}} - Psi_{{T->Y|empty}} = (q - 1/2)(aQT - 3aDT/10)",
                    target="Q"),
        OracleEntry(S, "path_alt[D]", "path_alt", lambda p, x: psi_d(p, x) - psi_0(p, x), x,
                    f"{src}: alternative Psi_D = Psi_{{T->Y|D}} - Psi_{{T->Y|empty}}", target="D"),
        OracleEntry(S, "E[Q|T,D]", "cond_mean", lambda p, x: _dep_q_mean(x["T"], x["D"]), x,
                    f"{src}: E[Q|T=1,d] = (7-4d)/(13-6d)", ("T", "D"), "Q"),
        OracleEntry(S, "E[Q|T,D]@0", "cond_mean", lambda p, x: _dep_q_mean(x["T"], x["D"]), x0,
                    f"{src}: E[Q|T=0,d] = (4+2d)/(7+6d)", ("T", "D"), "Q"),
        OracleEntry(S, "E[Q|T,D]@t0d1", "cond_mean", lambda p, x: _dep_q_mean(x["T"], x["D"]),
                    {"Q": 0.5, "D": 1.0, "T": 0.0}, f"{src}: E[Q|T=0,d=1] = 6/13", ("T", "D"), "Q"),
        OracleEntry(S, "mean path[Q]", "integral",
                    lambda p, x: 3 * p["alpha_QT"] / 182 + 3 * p["alpha_Q"] / 91, x,
                    f"{src}: E[Psi_Q] != 0 (value derived from the corrected Psi_Q over the joint of D, Q)",
                    target="Q"),
        OracleEntry(S, "mean path_alt[Q]", "integral_alt", lambda p, x: 0.0, x,
                    f"{src}: E[alternative Psi_Q] = 0", target="Q"),
    ]


@lru_cache(maxsize=1)
def oracle_table() -> tuple[OracleEntry, ...]:
    return tuple(_moderation() + _bias() + _mediation() + _mixed() + _dependent())


def oracle_entries(scenario: str | None = None) -> list[OracleEntry]:
    return [e for e in oracle_table() if scenario is None or e.scenario == scenario]


def get_entry(scenario: str, quantity: str) -> OracleEntry:
    for e in oracle_table():
        if e.scenario == scenario and e.quantity == quantity:
            return e
    avail = sorted(e.quantity for e in oracle_entries(scenario))
    if not avail:
        raise OracleError(f"no oracles for scenario {scenario!r}")
    raise OracleError(f"unknown quantity {quantity!r} for {scenario}; available: {', '.join(avail)}")


def oracle_value(scenario: str, quantity: str, inputs: dict | None = None) -> float:
    """Exact value; `inputs` may mix scenario parameters and instance values (by feature name)."""
    entry = get_entry(scenario, quantity)
    inputs = dict(inputs or {})
    known = DEFAULT_PARAMS[scenario]
    params = {k: v for k, v in inputs.items() if k in known}
    inst = {k: v for k, v in inputs.items() if k not in known}
    return entry.value(params, inst)


# ---------------------------------------------------------------- engine estimates

@dataclass
class OracleResult:
    entry: OracleEntry
    expected: float
    estimate: float
    std_error: float
    status: str
    note: str = ""
    tolerance: float = 5.0

    @property
    def z(self) -> float:
        diff = abs(self.estimate - self.expected)
        if diff <= 1e-9:
            return 0.0
        return diff / self.std_error if self.std_error > 0 else math.inf

    def row(self) -> dict:
        return {"scenario": self.entry.scenario, "quantity": self.entry.quantity, "expected": self.expected,
                "estimate": self.estimate, "std_error": self.std_error, "z": self.z, "status": self.status,
                "tolerance_se": self.tolerance, "note": self.note}


def _instance(spec, entry):
    return np.array([float(entry.inputs[f]) for f in spec.feature_names])


def estimate_entry(entry: OracleEntry, n_draws: int = 50_000, seed: int = 0, n_outer: int = 2000,
                   inner_draws: int = 1000) -> tuple[float, float]:
    """Engine estimate (value, MC standard error) of an oracle entry using the exact backend."""
    spec = build_scenario(entry.scenario, entry.params)
    model, sampler, dag = spec.model, spec.sampler, spec.dag
    x = _instance(spec, entry)
    covs = spec.covariates
    seed = derive_seed(seed, "oracle", entry.scenario, entry.quantity)
    kind = entry.kind
    if kind == "psi":
        eff = coalition_effect(model, sampler, Coalition.of(covs, entry.members), x, n_draws, seed)
        return eff.psi, eff.mc_std_error
    if kind in ("path", "path_alt"):
        variant = "standard" if kind == "path" else "alternative"
        pe = path_effect(model, sampler, dag, single_path_for(dag, entry.target), x, variant, n_draws, seed)
        return pe.psi_path, pe.mc_std_error
    if kind in ("phi_coalition", "phi_coalition_causal"):
        mode = "on_manifold" if kind == "phi_coalition" else "causal"
        est = coalition_shapley_value(model, sampler, Coalition.of(covs, entry.members), x, mode, n_draws, seed)
        return est.value, est.mc_std_error
    if kind in ("cs_direct", "cs_indirect"):
        direct, indirect = causal_shapley_split(model, sampler, Coalition.of(covs, entry.members), len(covs), x,
                                                n_draws, seed)
        est = direct if kind == "cs_direct" else indirect
        return est.value, est.mc_std_error
    if kind in ("cs_direct_total", "cs_indirect_total"):
        rep = full_shapley(model, sampler, x, "causal", n_draws, seed)
        est = (rep.direct if kind == "cs_direct_total" else rep.indirect)["T"]
        return est.value, est.mc_std_error
    if kind == "cond_mean":
        names = spec.feature_names
        known = {names.index(g): float(entry.inputs[g]) for g in entry.members}
        rows = sampler.sample_conditional(known, n_draws, seed)
        col = rows[:, names.index(entry.target)]
        return float(col.mean()), float(col.std(ddof=1) / math.sqrt(n_draws))
    if kind in ("integral", "integral_alt"):
        settings = PwshapSettings(n_draws=inner_draws, seed=seed)
        cond = {g: float(entry.inputs[g]) for g in entry.conditioning}
        fixed = {g: float(entry.inputs[g]) for g in entry.fixed}
        variant = "standard" if kind == "integral" else "alternative"
        return integration_check(model, sampler, dag, entry.target, cond, n_outer, settings, fixed, variant)
    raise OracleError(f"unknown estimator kind {kind!r}")


def run_oracle_check(entries=None, n_draws: int = 50_000, seed: int = 0, n_outer: int = 2000,
                     inner_draws: int = 1000, pass_se: float = 5.0, fail_se: float = 6.0,
                     wide_se: float = 0.02) -> list[OracleResult]:
    """Compare every entry with its engine estimate.

    pass: within pass_se standard errors; warn: between pass_se and fail_se;
    fail: beyond fail_se (or any difference above 1e-9 when the engine is
    exact). A standard error above wide_se * max(1, |expected|) adds a
    'wide SE' note without changing the status.
    """
    out = []
    for entry in (oracle_table() if entries is None else entries):
        expected = entry.value()
        est, se = estimate_entry(entry, n_draws, seed, n_outer, inner_draws)
        res = OracleResult(entry, expected, est, se, "pass", tolerance=pass_se)
        z = res.z
        if z > fail_se:
            res.status = "fail"
        elif z > pass_se:
            res.status = "warn"
        if se > wide_se * max(1.0, abs(expected)):
            res.note = "wide SE"
        out.append(res)
    return out


def mutated(entry: OracleEntry, sign: float = -1.0) -> OracleEntry:
    """Copy of `entry` with its formula multiplied by `sign` (mutation sanity checks)."""
    f = entry.formula
    return replace(entry, formula=lambda p, x: sign * f(p, x), quantity=entry.quantity + "~mutated")
