"""Independent reference implementations used only by the tests."""
import math

import numpy as np
from scipy.integrate import solve_ivp


def mg_method_of_steps(n, tau=17.0, a=0.2, b=-0.1, ex=10.0, hist=1.2, spacing=1.0, rtol=1e-12):
    """Mackey-Glass by the method of steps with an adaptive 8th-order integrator.

    Each delay interval is an ordinary ODE whose delayed term is the dense
    output of the previous interval. Returns x(i * spacing) for i = 0..n-1.
    """
    t_end = (n - 1) * spacing
    pieces = []

    def past(t):
        if t <= 0.0:
            return hist
        for p in reversed(pieces):
            if p.t_min <= t <= p.t_max:
                return float(p(t)[0])
        raise AssertionError(f"no dense output covers t={t}")

    def rhs(t, y):
        xd = past(t - tau)
        return [b * y[0] + a * xd / (1.0 + xd**ex)]

    t0, y0 = 0.0, [hist]
    while t0 < t_end:
        t1 = min(t0 + tau, t_end)
        sol = solve_ivp(rhs, (t0, t1), y0, method="DOP853", rtol=rtol, atol=rtol * 1e-1, dense_output=True)
        pieces.append(sol.sol)
        y0, t0 = [sol.y[0, -1]], t1
    return np.array([hist] + [past(i * spacing) for i in range(1, n)])


def mg_euler(n, dt, tau=17.0, a=0.2, b=-0.1, ex=10.0, hist=1.2, spacing=1.0):
    """Forward Euler with an exact-grid delay; requires tau/dt and spacing/dt integral."""
    lag = round(tau / dt)
    stride = round(spacing / dt)
    total = (n - 1) * stride
    buf = np.empty(lag + total + 1)
    buf[: lag + 1] = hist
    x = hist
    for k in range(total):
        xd = buf[k]
        x = x + dt * (b * x + a * xd / (1.0 + xd**ex))
        buf[lag + k + 1] = x
    return buf[lag::stride][:n]


def arma_trend_noiseless(n, phi=0.81):
    """Zero-innovation ARMA(1,1) with the trend inside the recursion, in closed form.

    X_t = sum_{s=1..t} phi^(t-s) g(s) with g(s) = s/1000 + (s/1000)^2.
    """
    out = []
    for t in range(1, n + 1):
        out.append(math.fsum(phi ** (t - s) * (s / 1000 + (s / 1000) ** 2) for s in range(1, t + 1)))
    return np.array(out)


def arma11_rho1(phi, theta):
    return (1 + phi * theta) * (phi + theta) / (1 + 2 * phi * theta + theta**2)
