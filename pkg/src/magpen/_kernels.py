"""Numba kernels for the horizon solve.

Everything the per-tick optimization touches lives here as nopython code:
cubic-spline evaluation, the stage cost and its analytic gradient, the Euler
rollout with box projection, the projected-gradient solver, and the
exhaustive input-grid oracle used to audit the solver at tiny horizons.

State layout: (px, py, vx, vy, alpha, theta); input: (ax, ay, alpha_dot,
theta_dot). Stage weights decay as gamma^k over the horizon. Cost terms and
clamps mirror the public model exactly; the cost-only and cost+gradient paths
are kept adjacent and cross-checked by tests.
"""

import numpy as np
from numba import njit

SIGMA_ARMIJO = 1e-4

# Quadratic penalty on the pre-projection state excess. Feasibility comes from
# the hard clamp; the penalty only restores a descent direction where the
# clamp's subgradient is flat (otherwise a state pinned at a box face with
# outward velocity is a local minimum the solver can never leave).
BOX_PENALTY = 1.0


@njit(cache=True)
def spline_eval(knots, coeffs, theta):
    """Position, first and second derivative of the path at clamped theta."""
    L = knots[-1]
    th = min(max(theta, 0.0), L)
    i = np.searchsorted(knots, th) - 1
    if i < 0:
        i = 0
    if i > len(knots) - 2:
        i = len(knots) - 2
    t = th - knots[i]
    c0x, c0y = coeffs[0, i, 0], coeffs[0, i, 1]
    c1x, c1y = coeffs[1, i, 0], coeffs[1, i, 1]
    c2x, c2y = coeffs[2, i, 0], coeffs[2, i, 1]
    c3x, c3y = coeffs[3, i, 0], coeffs[3, i, 1]
    px = ((c0x * t + c1x) * t + c2x) * t + c3x
    py = ((c0y * t + c1y) * t + c2y) * t + c3y
    dx = (3.0 * c0x * t + 2.0 * c1x) * t + c2x
    dy = (3.0 * c0y * t + 2.0 * c1y) * t + c2y
    ddx = 6.0 * c0x * t + 2.0 * c1x
    ddy = 6.0 * c0y * t + 2.0 * c1y
    return px, py, dx, dy, ddx, ddy


@njit(cache=True, inline="always")
def f0_ratio(u):
    if u >= 2.0:
        return 0.0
    q = 1.0 + u * u
    return u * (4.0 - u * u) / (q * q * q * np.sqrt(q))


@njit(cache=True, inline="always")
def f0_ratio_deriv(u):
    if u >= 2.0:
        return 0.0
    q = 1.0 + u * u
    q4 = (q * q) * (q * q)
    return ((4.0 - 3.0 * u * u) * q - 7.0 * u * u * (4.0 - u * u)) / (q4 * np.sqrt(q))


@njit(cache=True)
def stage_cost(knots, coeffs, px, py, al, th, td, td_prev, penx, peny,
               wl, wc, wth, wtd, wf, wd, wa, spring_k, f_max, F0, h):
    """Stage cost J_k (no input penalty). spring_k = c*F0/h."""
    sx, sy, dx, dy, _, _ = spline_eval(knots, coeffs, th)
    nrm = np.sqrt(dx * dx + dy * dy)
    nx, ny = dx / nrm, dy / nrm
    rx, ry = sx - penx, sy - peny
    rn = rx * nx + ry * ny
    rr = rx * rx + ry * ry
    c_l = rn * rn
    c_c = rr - c_l
    dtd = td - td_prev

    rlen = np.sqrt(rr)
    if rlen == 0.0:
        ftx = 0.0
        fty = 0.0
    elif spring_k * rlen <= f_max:
        ftx = spring_k * rx
        fty = spring_k * ry
    else:
        ftx = f_max * rx / rlen
        fty = f_max * ry / rlen

    vx_ = px - penx
    vy_ = py - peny
    d = np.sqrt(vx_ * vx_ + vy_ * vy_)
    if d == 0.0 or d >= 2.0 * h:
        fax = 0.0
        fay = 0.0
    else:
        g = al * F0 * f0_ratio(d / h) / d
        fax = g * vx_
        fay = g * vy_

    ex = ftx - fax
    ey = fty - fay
    c_f = ex * ex + ey * ey
    c_d = d * d
    return (wl * c_l + wc * c_c - wth * th + wtd * dtd * dtd
            + wf * c_f + wd * c_d + wa * al * al)


@njit(cache=True)
def stage_cost_grad(knots, coeffs, px, py, al, th, td, td_prev, penx, peny,
                    wl, wc, wth, wtd, wf, wd, wa, spring_k, f_max, F0, h):
    """Stage cost and analytic gradient.

    Returns (J, gpx, gpy, gal, gth, gtd, gtd_prev); velocity components have
    zero stage gradient. Clamp boundaries (force cutoff, spring saturation,
    coincident points) use the zero-side subgradient.
    """
    sx, sy, dx, dy, ddx, ddy = spline_eval(knots, coeffs, th)
    nrm = np.sqrt(dx * dx + dy * dy)
    nx, ny = dx / nrm, dy / nrm
    # dn/dtheta: derivative of the normalized tangent
    ndd = nx * ddx + ny * ddy
    dnx = (ddx - nx * ndd) / nrm
    dny = (ddy - ny * ndd) / nrm

    rx, ry = sx - penx, sy - peny
    rn = rx * nx + ry * ny
    rr = rx * rx + ry * ry
    c_l = rn * rn
    c_c = rr - c_l
    dtd = td - td_prev

    # d(rn)/dth and dC_l/dth, dC_c/dth ; dr/dth = s'(th)
    drn = dx * nx + dy * ny + rx * dnx + ry * dny
    g_cl_th = 2.0 * rn * drn
    g_cc_th = 2.0 * (rx * dx + ry * dy) - g_cl_th

    rlen = np.sqrt(rr)
    if rlen == 0.0:
        ftx = fty = 0.0
        dft_th_x = dft_th_y = 0.0
    elif spring_k * rlen <= f_max:
        ftx = spring_k * rx
        fty = spring_k * ry
        dft_th_x = spring_k * dx
        dft_th_y = spring_k * dy
    else:
        ftx = f_max * rx / rlen
        fty = f_max * ry / rlen
        rs = rx * dx + ry * dy
        dft_th_x = f_max * (dx / rlen - rx * rs / rlen**3)
        dft_th_y = f_max * (dy / rlen - ry * rs / rlen**3)

    vx_ = px - penx
    vy_ = py - peny
    d = np.sqrt(vx_ * vx_ + vy_ * vy_)
    active = d > 0.0 and d < 2.0 * h
    if active:
        f0v = f0_ratio(d / h)
        g = al * F0 * f0v / d
        fax = g * vx_
        fay = g * vy_
    else:
        f0v = 0.0
        g = 0.0
        fax = fay = 0.0

    ex = ftx - fax
    ey = fty - fay
    c_f = ex * ex + ey * ey
    c_d = d * d

    J = (wl * c_l + wc * c_c - wth * th + wtd * dtd * dtd
         + wf * c_f + wd * c_d + wa * al * al)

    # gradient w.r.t. magnet position (through F_a and C_d)
    gpx = wd * 2.0 * vx_
    gpy = wd * 2.0 * vy_
    gal = wa * 2.0 * al
    if active:
        f0p = f0_ratio_deriv(d / h)
        # dFa_i/dv_j = a*F0*[f0'(u)/h * v_i v_j / d^2 + f0 * (I_ij/d - v_i v_j/d^3)]
        k1 = al * F0 * f0p / (h * d * d)
        k2 = al * F0 * f0v
        m_xx = k1 * vx_ * vx_ + k2 * (1.0 / d - vx_ * vx_ / d**3)
        m_xy = k1 * vx_ * vy_ + k2 * (-vx_ * vy_ / d**3)
        m_yy = k1 * vy_ * vy_ + k2 * (1.0 / d - vy_ * vy_ / d**3)
        gpx += wf * (-2.0) * (ex * m_xx + ey * m_xy)
        gpy += wf * (-2.0) * (ex * m_xy + ey * m_yy)
        gal += wf * (-2.0) * F0 * f0v * (ex * vx_ + ey * vy_) / d

    g_th = (wl * g_cl_th + wc * g_cc_th - wth
            + wf * 2.0 * (ex * dft_th_x + ey * dft_th_y))
    g_td = wtd * 2.0 * dtd
    g_td_prev = -wtd * 2.0 * dtd
    return J, gpx, gpy, gal, g_th, g_td, g_td_prev


@njit(cache=True, inline="always")
def _clamp6(v, lo, hi, out, mask):
    for j in range(6):
        x = v[j]
        if x < lo[j]:
            out[j] = lo[j]
            mask[j] = 0.0
        elif x > hi[j]:
            out[j] = hi[j]
            mask[j] = 0.0
        else:
            out[j] = x
            mask[j] = 1.0


@njit(cache=True, inline="always")
def _euler6(x, uk, dt, raw):
    raw[0] = x[0] + x[2] * dt
    raw[1] = x[1] + x[3] * dt
    raw[2] = x[2] + uk[0] * dt
    raw[3] = x[3] + uk[1] * dt
    raw[4] = x[4] + uk[2] * dt
    raw[5] = x[5] + uk[3] * dt


@njit(cache=True)
def rollout(x0, u, dt, xlo, xhi):
    """Euler rollout with state projection.

    Returns states (N+1, 6), clamp masks, and the pre-projection excess
    (raw - clamped) per transition.
    """
    N = u.shape[0]
    xs = np.empty((N + 1, 6))
    masks = np.ones((N + 1, 6))
    excess = np.zeros((N, 6))
    xs[0] = x0
    raw = np.empty(6)
    for k in range(N):
        _euler6(xs[k], u[k], dt, raw)
        _clamp6(raw, xlo, xhi, xs[k + 1], masks[k + 1])
        for j in range(6):
            excess[k, j] = raw[j] - xs[k + 1, j]
    return xs, masks, excess


@njit(cache=True)
def total_cost(knots, coeffs, x0, u, pen, td_prev, dt, xlo, xhi, gamma, Rdiag,
               wl, wc, wth, wtd, wf, wd, wa, spring_k, f_max, F0, h):
    """Horizon objective: sum_k gamma^k (J_k + u_k^T R u_k + box excess), terminal J_N."""
    xs, _, excess = rollout(x0, u, dt, xlo, xhi)
    N = u.shape[0]
    total = 0.0
    wk = 1.0
    tdp = td_prev
    for k in range(N):
        J = stage_cost(knots, coeffs, xs[k, 0], xs[k, 1], xs[k, 4], xs[k, 5],
                       u[k, 3], tdp, pen[k, 0], pen[k, 1],
                       wl, wc, wth, wtd, wf, wd, wa, spring_k, f_max, F0, h)
        pen_u = (Rdiag[0] * u[k, 0] ** 2 + Rdiag[1] * u[k, 1] ** 2
                 + Rdiag[2] * u[k, 2] ** 2 + Rdiag[3] * u[k, 3] ** 2)
        exc = 0.0
        for j in range(6):
            exc += excess[k, j] ** 2
        total += wk * (J + pen_u + BOX_PENALTY * exc)
        tdp = u[k, 3]
        wk *= gamma
    # terminal stage: state terms only (no theta-dot smoothness, no input)
    J = stage_cost(knots, coeffs, xs[N, 0], xs[N, 1], xs[N, 4], xs[N, 5],
                   tdp, tdp, pen[N, 0], pen[N, 1],
                   wl, wc, wth, wtd, wf, wd, wa, spring_k, f_max, F0, h)
    total += wk * J
    return total


@njit(cache=True)
def total_cost_grad(knots, coeffs, x0, u, pen, td_prev, dt, xlo, xhi, gamma, Rdiag,
                    wl, wc, wth, wtd, wf, wd, wa, spring_k, f_max, F0, h):
    """Objective and gradient w.r.t. the input sequence (adjoint pass)."""
    xs, masks, excess = rollout(x0, u, dt, xlo, xhi)
    N = u.shape[0]
    grad = np.zeros((N, 4))
    lam = np.zeros(6)        # dJ/dx_k accumulated backward
    total = 0.0
    wks = np.empty(N + 1)

    # forward: stage costs and direct input gradients
    sg = np.zeros((N + 1, 6))   # stage gradients w.r.t. state
    wk = 1.0
    tdp = td_prev
    for k in range(N):
        wks[k] = wk
        J, gpx, gpy, gal, gth, gtd, gtdp = stage_cost_grad(
            knots, coeffs, xs[k, 0], xs[k, 1], xs[k, 4], xs[k, 5],
            u[k, 3], tdp, pen[k, 0], pen[k, 1],
            wl, wc, wth, wtd, wf, wd, wa, spring_k, f_max, F0, h)
        pen_u = (Rdiag[0] * u[k, 0] ** 2 + Rdiag[1] * u[k, 1] ** 2
                 + Rdiag[2] * u[k, 2] ** 2 + Rdiag[3] * u[k, 3] ** 2)
        exc = 0.0
        for j in range(6):
            exc += excess[k, j] ** 2
        total += wk * (J + pen_u + BOX_PENALTY * exc)
        sg[k, 0] = wk * gpx
        sg[k, 1] = wk * gpy
        sg[k, 4] = wk * gal
        sg[k, 5] = wk * gth
        grad[k, 0] += wk * 2.0 * Rdiag[0] * u[k, 0]
        grad[k, 1] += wk * 2.0 * Rdiag[1] * u[k, 1]
        grad[k, 2] += wk * 2.0 * Rdiag[2] * u[k, 2]
        grad[k, 3] += wk * gtd + wk * 2.0 * Rdiag[3] * u[k, 3]
        if k > 0:
            grad[k - 1, 3] += wk * gtdp
        tdp = u[k, 3]
        wk *= gamma
    wks[N] = wk
    J, gpx, gpy, gal, gth, _, _ = stage_cost_grad(
        knots, coeffs, xs[N, 0], xs[N, 1], xs[N, 4], xs[N, 5],
        tdp, tdp, pen[N, 0], pen[N, 1],
        wl, wc, wth, wtd, wf, wd, wa, spring_k, f_max, F0, h)
    total += wk * J
    sg[N, 0] = wk * gpx
    sg[N, 1] = wk * gpy
    sg[N, 4] = wk * gal
    sg[N, 5] = wk * gth

    # backward adjoint through x_{k+1} = clamp(A x_k + B u_k); the clamp mask
    # gates the state dependence, the excess penalty flows through raw
    for j in range(6):
        lam[j] = sg[N, j]
    for k in range(N - 1, -1, -1):
        m = masks[k + 1]
        bp = 2.0 * BOX_PENALTY * wks[k]
        l0 = lam[0] * m[0] + bp * excess[k, 0]
        l1 = lam[1] * m[1] + bp * excess[k, 1]
        l2 = lam[2] * m[2] + bp * excess[k, 2]
        l3 = lam[3] * m[3] + bp * excess[k, 3]
        l4 = lam[4] * m[4] + bp * excess[k, 4]
        l5 = lam[5] * m[5] + bp * excess[k, 5]
        grad[k, 0] += dt * l2
        grad[k, 1] += dt * l3
        grad[k, 2] += dt * l4
        grad[k, 3] += dt * l5
        nlam = np.empty(6)
        nlam[0] = sg[k, 0] + l0
        nlam[1] = sg[k, 1] + l1
        nlam[2] = sg[k, 2] + dt * l0 + l2
        nlam[3] = sg[k, 3] + dt * l1 + l3
        nlam[4] = sg[k, 4] + l4
        nlam[5] = sg[k, 5] + l5
        lam = nlam
    return total, grad


@njit(cache=True)
def solve_pgd(knots, coeffs, x0, u_init, pen, td_prev, dt, xlo, xhi, ulo, uhi,
              gamma, Rdiag, wl, wc, wth, wtd, wf, wd, wa, spring_k, f_max, F0, h,
              free, max_iter, step_tol):
    """Projected-gradient descent with Armijo backtracking.

    One spectral (Barzilai-Borwein) step size per input channel: the cost
    curvature differs by orders of magnitude between the acceleration,
    intensity-rate and progress-rate channels, and a single step size stalls
    the flattest one. Backtracking scales all channels by a common factor, so
    acceptance is still a monotone Armijo condition. `free` masks channels
    (0 freezes a channel at its initial value, used by the timed-reference
    baseline). Returns (u, total, iterations, converged).
    """
    N = u_init.shape[0]
    u = np.empty((N, 4))
    for k in range(N):
        for j in range(4):
            u[k, j] = min(max(u_init[k, j], ulo[j]), uhi[j])

    J, g = total_cost_grad(knots, coeffs, x0, u, pen, td_prev, dt, xlo, xhi,
                           gamma, Rdiag, wl, wc, wth, wtd, wf, wd, wa,
                           spring_k, f_max, F0, h)
    # initial per-channel steps: reach ~10% of the channel range against the
    # largest gradient seen on that channel
    eta = np.empty(4)
    for j in range(4):
        gmax = 0.0
        for k in range(N):
            if abs(g[k, j]) > gmax:
                gmax = abs(g[k, j])
        if gmax > 0.0 and free[j] != 0.0:
            eta[j] = 0.1 * (uhi[j] - ulo[j]) / gmax
        else:
            eta[j] = 1.0

    converged = False
    it = 0
    u_new = np.empty((N, 4))
    while it < max_iter:
        it += 1
        accepted = False
        tau = 1.0
        for _ in range(40):
            decr = 0.0
            for k in range(N):
                for j in range(4):
                    if free[j] == 0.0:
                        u_new[k, j] = u[k, j]
                    else:
                        v = u[k, j] - tau * eta[j] * g[k, j]
                        v = min(max(v, ulo[j]), uhi[j])
                        u_new[k, j] = v
                        decr += g[k, j] * (u[k, j] - v)
            J_new = total_cost(knots, coeffs, x0, u_new, pen, td_prev, dt,
                               xlo, xhi, gamma, Rdiag, wl, wc, wth, wtd,
                               wf, wd, wa, spring_k, f_max, F0, h)
            if J_new <= J - SIGMA_ARMIJO * decr:
                accepted = True
                break
            tau *= 0.5
            if tau < 1e-14:
                break
        if not accepted:
            converged = True
            break

        J2, g_new = total_cost_grad(knots, coeffs, x0, u_new, pen, td_prev, dt,
                                    xlo, xhi, gamma, Rdiag, wl, wc, wth, wtd,
                                    wf, wd, wa, spring_k, f_max, F0, h)
        step_inf = 0.0
        for j in range(4):
            du2 = 0.0
            dudg = 0.0
            for k in range(N):
                dj = u_new[k, j] - u[k, j]
                du2 += dj * dj
                dudg += dj * (g_new[k, j] - g[k, j])
                if abs(dj) > step_inf:
                    step_inf = abs(dj)
            if dudg > 1e-300:
                eta[j] = min(max(du2 / dudg, 1e-12), 1e9)
            elif du2 > 0.0:
                eta[j] = min(eta[j] * 2.0, 1e9)
        u[:] = u_new
        J = J2
        g = g_new
        if step_inf < step_tol:
            converged = True
            break
    return u, J, it, converged


@njit(cache=True)
def closest_theta_scan(knots, coeffs, penx, peny, lo, hi, step, hint, tol):
    """Nearest-point progress in [lo, hi]: grid scan + golden refinement.

    Ties (within tol of the best squared distance) break toward the hint so
    the setpoint cannot teleport across nearby lobes.
    """
    n = int((hi - lo) / step) + 2
    if n < 5:
        n = 5
    dg = (hi - lo) / (n - 1)
    best_i = 0
    best_d2 = 1e300
    for i in range(n):
        th = lo + dg * i
        sx, sy, _, _, _, _ = spline_eval(knots, coeffs, th)
        d2 = (sx - penx) ** 2 + (sy - peny) ** 2
        if d2 < best_d2 - tol:
            best_d2 = d2
            best_i = i
        elif d2 < best_d2 + tol:
            if abs(th - hint) < abs(lo + dg * best_i - hint):
                best_d2 = min(best_d2, d2)
                best_i = i
    a = lo + dg * (best_i - 1) if best_i > 0 else lo
    b = lo + dg * (best_i + 1) if best_i < n - 1 else hi
    inv = 0.6180339887498949
    c = b - inv * (b - a)
    d = a + inv * (b - a)
    sx, sy, _, _, _, _ = spline_eval(knots, coeffs, c)
    fc = (sx - penx) ** 2 + (sy - peny) ** 2
    sx, sy, _, _, _, _ = spline_eval(knots, coeffs, d)
    fd = (sx - penx) ** 2 + (sy - peny) ** 2
    while b - a > 1e-7:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - inv * (b - a)
            sx, sy, _, _, _, _ = spline_eval(knots, coeffs, c)
            fc = (sx - penx) ** 2 + (sy - peny) ** 2
        else:
            a, c, fc = c, d, fd
            d = a + inv * (b - a)
            sx, sy, _, _, _, _ = spline_eval(knots, coeffs, d)
            fd = (sx - penx) ** 2 + (sy - peny) ** 2
    return 0.5 * (a + b)


@njit(cache=True)
def stage_costs_seq(knots, coeffs, xs, u, pen, td_prev, dt, gamma, Rdiag,
                    wl, wc, wth, wtd, wf, wd, wa, spring_k, f_max, F0, h):
    """Per-stage decayed costs of a rolled-out solution; sums to the objective."""
    N = u.shape[0]
    out = np.empty(N + 1)
    raw = np.empty(6)
    wk = 1.0
    tdp = td_prev
    for k in range(N):
        J = stage_cost(knots, coeffs, xs[k, 0], xs[k, 1], xs[k, 4], xs[k, 5],
                       u[k, 3], tdp, pen[k, 0], pen[k, 1],
                       wl, wc, wth, wtd, wf, wd, wa, spring_k, f_max, F0, h)
        pen_u = (Rdiag[0] * u[k, 0] ** 2 + Rdiag[1] * u[k, 1] ** 2
               + Rdiag[2] * u[k, 2] ** 2 + Rdiag[3] * u[k, 3] ** 2)
        _euler6(xs[k], u[k], dt, raw)
        exc = 0.0
        for j in range(6):
            e = raw[j] - xs[k + 1, j]
            exc += e * e
        out[k] = wk * (J + pen_u + BOX_PENALTY * exc)
        tdp = u[k, 3]
        wk *= gamma
    out[N] = wk * stage_cost(knots, coeffs, xs[N, 0], xs[N, 1], xs[N, 4],
                             xs[N, 5], tdp, tdp, pen[N, 0], pen[N, 1],
                             wl, wc, wth, wtd, wf, wd, wa, spring_k, f_max, F0, h)
    return out


@njit(cache=True)
def grid_min_two_stage(knots, coeffs, x0, combos, pen, td_prev, dt, xlo, xhi,
                       gamma, Rdiag, wl, wc, wth, wtd, wf, wd, wa,
                       spring_k, f_max, F0, h):
    """Exhaustive minimum of the N=2 objective over a per-stage input grid.

    combos: (M, 4) admissible input vectors; all M^2 two-stage sequences are
    evaluated. Independent audit oracle for solve_pgd at desk scale.
    """
    M = combos.shape[0]
    best = np.inf
    raw = np.empty(6)
    x1 = np.empty(6)
    x2 = np.empty(6)
    msk = np.empty(6)
    for i0 in range(M):
        u0 = combos[i0]
        _euler6(x0, u0, dt, raw)
        _clamp6(raw, xlo, xhi, x1, msk)
        exc0 = 0.0
        for j in range(6):
            e = raw[j] - x1[j]
            exc0 += e * e
        J0 = stage_cost(knots, coeffs, x0[0], x0[1], x0[4], x0[5],
                        u0[3], td_prev, pen[0, 0], pen[0, 1],
                        wl, wc, wth, wtd, wf, wd, wa, spring_k, f_max, F0, h)
        pen0 = (Rdiag[0] * u0[0] ** 2 + Rdiag[1] * u0[1] ** 2
                + Rdiag[2] * u0[2] ** 2 + Rdiag[3] * u0[3] ** 2)
        J1s = stage_cost(knots, coeffs, x1[0], x1[1], x1[4], x1[5],
                         u0[3], u0[3], pen[1, 0], pen[1, 1],
                         wl, wc, wth, wtd, wf, wd, wa, spring_k, f_max, F0, h)
        base = J0 + pen0 + BOX_PENALTY * exc0 + gamma * J1s
        for i1 in range(M):
            u1 = combos[i1]
            _euler6(x1, u1, dt, raw)
            _clamp6(raw, xlo, xhi, x2, msk)
            exc1 = 0.0
            for j in range(6):
                e = raw[j] - x2[j]
                exc1 += e * e
            dtd = u1[3] - u0[3]
            pen1 = (Rdiag[0] * u1[0] ** 2 + Rdiag[1] * u1[1] ** 2
                    + Rdiag[2] * u1[2] ** 2 + Rdiag[3] * u1[3] ** 2)
            J2 = stage_cost(knots, coeffs, x2[0], x2[1], x2[4], x2[5],
                            u1[3], u1[3], pen[2, 0], pen[2, 1],
                            wl, wc, wth, wtd, wf, wd, wa, spring_k, f_max, F0, h)
            tot = (base + gamma * (wtd * dtd * dtd + pen1 + BOX_PENALTY * exc1)
                   + gamma * gamma * J2)
            if tot < best:
                best = tot
    return best
