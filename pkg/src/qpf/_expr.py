"""Tiny safe evaluator for user-defined fibre lifts given as closed-form expressions.

Accepts a python-syntax expression in the variables x, theta, tau, compiled once
into a numpy-broadcasting callable.  Only arithmetic, the math functions listed
in _FUNCS and the constant pi are allowed.
"""

from __future__ import annotations

import ast

import numpy as np

from .circle import ConfigError

_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "arctan": np.arctan,
    "atan": np.arctan,
    "arcsin": np.arcsin,
    "arccos": np.arccos,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "floor": np.floor,
    "mod": np.mod,
}

_CONSTS = {"pi": np.pi, "e": np.e}

_ALLOWED_NODES = (
    ast.Expression,
    ast.BinOp,
    ast.UnaryOp,
    ast.Add,
    ast.Sub,
    ast.Mult,
    ast.Div,
    ast.Pow,
    ast.Mod,
    ast.USub,
    ast.UAdd,
    ast.Call,
    ast.Name,
    ast.Load,
    ast.Constant,
)


def compile_expression(text: str):
    """Compile `text` to f(theta, x, tau) -> ndarray, validating the AST first."""
    try:
        tree = ast.parse(text, mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse fibre expression: {exc}") from exc
    for node in ast.walk(tree):
        if not isinstance(node, _ALLOWED_NODES):
            raise ConfigError(f"disallowed syntax in fibre expression: {type(node).__name__}")
        if isinstance(node, ast.Call):
            if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
                raise ConfigError("only whitelisted functions allowed in fibre expression")
            if node.keywords:
                raise ConfigError("keyword arguments not allowed in fibre expression")
        if isinstance(node, ast.Name):
            if node.id not in ("x", "theta", "tau") and node.id not in _FUNCS and node.id not in _CONSTS:
                raise ConfigError(f"unknown name {node.id!r} in fibre expression")
        if isinstance(node, ast.Constant) and not isinstance(node.value, (int, float)):
            raise ConfigError("only numeric constants allowed in fibre expression")
    code = compile(tree, "<fibre>", "eval")
    env = dict(_FUNCS)
    env.update(_CONSTS)

    def fn(theta, x, tau):
        local = {"theta": np.asarray(theta, float), "x": np.asarray(x, float), "tau": np.asarray(tau, float)}
        return np.asarray(eval(code, {"__builtins__": {}}, {**env, **local}), dtype=float)

    return fn
