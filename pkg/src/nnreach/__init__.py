"""Reachability analysis for discrete-time neural-network dynamical systems.

Bounds the reachable states of ``x_{t+1} = f(x_t, w_t)`` (f a network with
an arbitrary DAG architecture, w a bounded disturbance) over a finite
horizon, either step by step (recursive) or through the unrolled dynamics
(one-shot), using a family of propagators: interval arithmetic, forward and
backward linear bound propagation, an LP relaxation, and branch-and-bound.
"""

__version__ = "0.1.0"

from . import graph, lp, reach, relax, systems  # noqa: F401
