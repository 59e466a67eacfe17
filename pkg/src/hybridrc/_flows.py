"""Pure-Python right-hand sides of the benchmark systems.

Each flow takes the state as a sequence of floats and the parameter vector
in the same order the compiled kernels use, and returns a tuple.
"""
import math

LORENZ = 0
ROSSLER = 1
DOUBLE_SCROLL = 2


def lorenz(y, p):
    # p = (sigma, rho, beta)
    x0, x1, x2 = y
    return (p[0] * (x1 - x0), x0 * (p[1] - x2) - x1, x0 * x1 - p[2] * x2)


def rossler(y, p):
    # p = (a, b, c)
    x0, x1, x2 = y
    return (-x1 - x2, x0 + p[0] * x1, p[1] + x2 * (x0 - p[2]))


def double_scroll(y, p):
    # p = (R1, R2, R4, Ir, beta)
    v1, v2, i = y
    dv = v1 - v2
    g = 2.0 * p[3] * math.sinh(p[4] * dv)
    return (v1 / p[0] - dv / p[1] - g, dv / p[1] + g - i, v2 - p[2] * i)


def mackey_glass(x, xd, p):
    # p = (a, b, c); scalar state, xd is the delayed value
    return p[0] * xd / (1.0 + xd ** p[2]) - p[1] * x


ODE_FLOWS = {LORENZ: lorenz, ROSSLER: rossler, DOUBLE_SCROLL: double_scroll}
