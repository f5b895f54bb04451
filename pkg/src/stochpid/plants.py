"""Builtin plants and the expression-defined scalar plant builder.

``bench3`` is the third-order benchmark with uncertain parameters

    f = a*sin(x1) + b*x2 + c*x3 + d + u + mu*tanh(u),   g = sigma,

restricted to |a|, |b|, |c| <= 1/2, mu >= 0, which keeps the asserted
Lipschitz constants L = sqrt(3)/2, M = 0 and control-gain lower bound 1
valid for the whole parameter class.  ``chain`` (f = u + bias) and ``ou``
(f = u - theta*x1) cover the linear sanity cases.  Expression plants are
scalar (d = m = 1) with drift over x1..xn, u and diffusion over x1..xn only.
"""

from __future__ import annotations

import math
from typing import Optional

import numpy as np

from .expr import eval_expr, parse_expr
from .model import PlantSpec

__all__ = ["bench3", "chain", "ou", "expression_plant", "BUILTIN_PLANTS", "build_plant"]


def bench3(
    a: float = 0.4,
    b: float = -0.3,
    c: float = 0.5,
    d: float = 6.0,
    mu: float = 5.2,
    sigma: float = 0.2,
) -> PlantSpec:
    """Third-order benchmark plant with additive noise of intensity sigma."""
    if max(abs(a), abs(b), abs(c)) > 0.5:
        raise ValueError("|a|, |b|, |c| must not exceed 1/2")
    if mu < 0:
        raise ValueError("mu must be nonnegative")

    def drift(x, u):
        x = np.asarray(x, dtype=float)
        return (
            a * np.sin(x[..., 0:1])
            + b * x[..., 1:2]
            + c * x[..., 2:3]
            + d
            + u
            + mu * np.tanh(u)
        )

    def diffusion(x):
        return np.array([[float(sigma)]])

    return PlantSpec(
        n=3,
        d=1,
        m=1,
        drift=drift,
        diffusion=diffusion,
        lipschitz_L=math.sqrt(3.0) / 2.0,
        lipschitz_M=0.0,
        gain_lower_b=1.0,
        name="bench3",
    )


def chain(n: int, sigma: float = 0.0, bias: float = 0.0) -> PlantSpec:
    """Linear integrator chain f = u + bias with additive noise."""

    def drift(x, u):
        return u + bias

    def diffusion(x):
        return np.array([[float(sigma)]])

    return PlantSpec(
        n=n,
        d=1,
        m=1,
        drift=drift,
        diffusion=diffusion,
        lipschitz_L=0.0,
        lipschitz_M=0.0,
        gain_lower_b=1.0,
        name="chain",
    )


def ou(theta: float = 1.0, sigma: float = 1.0) -> PlantSpec:
    """First-order plant f = u - theta*x1; open loop is an OU process.

    With u = 0 the stationary second moment is sigma^2/(2*theta), the
    standard simulator oracle.
    """
    if theta <= 0:
        raise ValueError("theta must be positive")

    def drift(x, u):
        x = np.asarray(x, dtype=float)
        return u - theta * x[..., 0:1]

    def diffusion(x):
        return np.array([[float(sigma)]])

    return PlantSpec(
        n=1,
        d=1,
        m=1,
        drift=drift,
        diffusion=diffusion,
        lipschitz_L=float(theta),
        lipschitz_M=0.0,
        gain_lower_b=1.0,
        name="ou",
    )


def expression_plant(
    n: int,
    drift: str,
    diffusion: str,
    L: float,
    M: float,
    b_lower: float = 1.0,
    name: str = "expression",
) -> PlantSpec:
    """Scalar plant (d = m = 1) from DSL expressions.

    The drift may reference x1..xn and u; the diffusion only x1..xn (the
    noise gain does not depend on the input).  L, M and b_lower are the
    caller's assertions about the expressions.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    drift_ast = parse_expr(drift, n=n, allow_u=True)
    diff_ast = parse_expr(diffusion, n=n, allow_u=False)

    def drift_fn(x, u):
        x = np.asarray(x, dtype=float)
        env = {f"x{i + 1}": x[..., i] for i in range(n)}
        env["u"] = np.asarray(u, dtype=float)[..., 0]
        out = np.asarray(eval_expr(drift_ast, env), dtype=float)
        return np.broadcast_to(out, np.shape(x)[:-1])[..., None]

    def diff_fn(x):
        x = np.asarray(x, dtype=float)
        env = {f"x{i + 1}": x[..., i] for i in range(n)}
        out = np.asarray(eval_expr(diff_ast, env), dtype=float)
        return np.broadcast_to(out, np.shape(x)[:-1])[..., None, None]

    return PlantSpec(
        n=n,
        d=1,
        m=1,
        drift=drift_fn,
        diffusion=diff_fn,
        lipschitz_L=L,
        lipschitz_M=M,
        gain_lower_b=b_lower,
        name=name,
    )


BUILTIN_PLANTS = {"bench3": bench3, "chain": chain, "ou": ou}


def build_plant(spec: dict, where: str = "plant") -> PlantSpec:
    """Construct a plant from a config mapping; errors carry field paths."""
    if not isinstance(spec, dict):
        raise ValueError(f"{where}: expected an object")
    kind = spec.get("kind")
    if kind in BUILTIN_PLANTS:
        params = spec.get("params", {})
        if not isinstance(params, dict):
            raise ValueError(f"{where}.params: expected an object")
        try:
            return BUILTIN_PLANTS[kind](**params)
        except TypeError as exc:
            raise ValueError(f"{where}.params: {exc}") from None
        except ValueError as exc:
            raise ValueError(f"{where}.params: {exc}") from None
    if kind == "expression":
        missing = [k for k in ("n", "drift", "diffusion", "L", "M") if k not in spec]
        if missing:
            raise ValueError(f"{where}: missing fields {missing} for an expression plant")
        return expression_plant(
            n=int(spec["n"]),
            drift=spec["drift"],
            diffusion=spec["diffusion"],
            L=float(spec["L"]),
            M=float(spec["M"]),
            b_lower=float(spec.get("b_lower", 1.0)),
        )
    raise ValueError(
        f"{where}.kind: expected one of {sorted(BUILTIN_PLANTS)} or 'expression', got {kind!r}"
    )
