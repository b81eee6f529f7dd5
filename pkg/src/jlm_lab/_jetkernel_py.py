"""Pure-Python tape kernel.

Fallback used when the compiled extension is unavailable (or forced through
``JLM_LAB_BACKEND=python``).  Must stay bit-compatible with
``_jetkernel_cy.pyx``: identical operation order, identical libm calls, no
algebraic shortcuts in one kernel that the other lacks.
"""

from math import cos, exp, floor, log, pow as fpow, sin, sqrt

# Opcode values mirrored in _jetkernel_cy.pyx.
OP_CONST = 0
OP_VAR = 1
OP_ADD = 2
OP_SUB = 3
OP_MUL = 4
OP_DIV = 5
OP_NEG = 6
OP_POW = 7
OP_EXP = 8
OP_LN = 9
OP_SIN = 10
OP_COS = 11
OP_SQRT = 12

STATUS_OK = 0
STATUS_DIV_ZERO = 1
STATUS_LOG_DOMAIN = 2
STATUS_SQRT_DOMAIN = 3
STATUS_POW_DOMAIN = 4
STATUS_POW_ZERO_NEG = 5


def eval_tape(ops, arg_a, arg_b, consts, point, order, val, grad, hess):
    """Run the instruction tape at ``point``.

    ops/arg_a/arg_b are int32 arrays, consts/point float64 arrays; ``order``
    selects how much to propagate (0 value, 1 +gradient, 2 +Hessian).
    Results land in the caller-allocated banks ``val`` (n_instr,),
    ``grad`` (n_instr, n_vars) and ``hess`` (n_instr, n_vars, n_vars);
    register k holds instruction k's output.  Returns
    ``(status, instr_index, bad_value)`` with status 0 on success.
    """
    n_instr = len(ops)
    nv = len(point)
    op_l = ops.tolist()
    a_l = arg_a.tolist()
    b_l = arg_b.tolist()
    c_l = consts.tolist()
    pt = point.tolist()

    vals = [0.0] * n_instr
    grads = [[0.0] * nv for _ in range(n_instr)] if order >= 1 else None
    hesses = (
        [[[0.0] * nv for _ in range(nv)] for _ in range(n_instr)] if order >= 2 else None
    )

    for k in range(n_instr):
        op = op_l[k]
        ia = a_l[k]

        if op == OP_CONST:
            vals[k] = c_l[k]
            continue

        if op == OP_VAR:
            vals[k] = pt[ia]
            if order >= 1:
                grads[k][ia] = 1.0
            continue

        va = vals[ia]

        if op <= OP_DIV:  # binary: ADD, SUB, MUL, DIV
            ib = b_l[k]
            vb = vals[ib]
            if op == OP_ADD:
                vals[k] = va + vb
                if order >= 1:
                    ga, gb, g = grads[ia], grads[ib], grads[k]
                    for i in range(nv):
                        g[i] = ga[i] + gb[i]
                if order >= 2:
                    ha, hb, h = hesses[ia], hesses[ib], hesses[k]
                    for i in range(nv):
                        for j in range(i, nv):
                            t = ha[i][j] + hb[i][j]
                            h[i][j] = t
                            h[j][i] = t
            elif op == OP_SUB:
                vals[k] = va - vb
                if order >= 1:
                    ga, gb, g = grads[ia], grads[ib], grads[k]
                    for i in range(nv):
                        g[i] = ga[i] - gb[i]
                if order >= 2:
                    ha, hb, h = hesses[ia], hesses[ib], hesses[k]
                    for i in range(nv):
                        for j in range(i, nv):
                            t = ha[i][j] - hb[i][j]
                            h[i][j] = t
                            h[j][i] = t
            elif op == OP_MUL:
                vals[k] = va * vb
                if order >= 1:
                    ga, gb, g = grads[ia], grads[ib], grads[k]
                    for i in range(nv):
                        g[i] = va * gb[i] + vb * ga[i]
                if order >= 2:
                    ha, hb, h = hesses[ia], hesses[ib], hesses[k]
                    for i in range(nv):
                        for j in range(i, nv):
                            t = va * hb[i][j] + vb * ha[i][j] + ga[i] * gb[j] + gb[i] * ga[j]
                            h[i][j] = t
                            h[j][i] = t
            else:  # OP_DIV
                if vb == 0.0:
                    return STATUS_DIV_ZERO, k, vb
                v = va / vb
                vals[k] = v
                if order >= 1:
                    ga, gb, g = grads[ia], grads[ib], grads[k]
                    for i in range(nv):
                        g[i] = (ga[i] - v * gb[i]) / vb
                if order >= 2:
                    ha, hb, h = hesses[ia], hesses[ib], hesses[k]
                    for i in range(nv):
                        for j in range(i, nv):
                            t = (ha[i][j] - g[i] * gb[j] - gb[i] * g[j] - v * hb[i][j]) / vb
                            h[i][j] = t
                            h[j][i] = t
            continue

        if op == OP_NEG:
            vals[k] = -va
            if order >= 1:
                ga, g = grads[ia], grads[k]
                for i in range(nv):
                    g[i] = -ga[i]
            if order >= 2:
                ha, h = hesses[ia], hesses[k]
                for i in range(nv):
                    for j in range(i, nv):
                        t = -ha[i][j]
                        h[i][j] = t
                        h[j][i] = t
            continue

        # remaining ops: value plus first/second derivative coefficients,
        # then one shared chain-rule block
        if op == OP_POW:
            c = c_l[k]
            if c == floor(c):
                if va == 0.0:
                    if c < 0.0:
                        return STATUS_POW_ZERO_NEG, k, va
                    v = 1.0 if c == 0.0 else 0.0
                    d1 = 1.0 if c == 1.0 else 0.0
                    d2 = 2.0 if c == 2.0 else 0.0
                else:
                    v = fpow(va, c)
                    d1 = c * fpow(va, c - 1.0)
                    d2 = c * (c - 1.0) * fpow(va, c - 2.0)
            else:
                if va <= 0.0:
                    return STATUS_POW_DOMAIN, k, va
                v = fpow(va, c)
                d1 = c * fpow(va, c - 1.0)
                d2 = c * (c - 1.0) * fpow(va, c - 2.0)
        elif op == OP_EXP:
            v = exp(va)
            d1 = v
            d2 = v
        elif op == OP_LN:
            if va <= 0.0:
                return STATUS_LOG_DOMAIN, k, va
            v = log(va)
            d1 = 1.0 / va
            d2 = -(d1 * d1)
        elif op == OP_SIN:
            v = sin(va)
            d1 = cos(va)
            d2 = -v
        elif op == OP_COS:
            v = cos(va)
            d1 = -sin(va)
            d2 = -v
        else:  # OP_SQRT
            if va <= 0.0:
                return STATUS_SQRT_DOMAIN, k, va
            v = sqrt(va)
            d1 = 0.5 / v
            d2 = -0.5 * d1 / va

        vals[k] = v
        if order >= 1:
            ga, g = grads[ia], grads[k]
            for i in range(nv):
                g[i] = d1 * ga[i]
        if order >= 2:
            ha, h = hesses[ia], hesses[k]
            for i in range(nv):
                for j in range(i, nv):
                    t = d1 * ha[i][j] + d2 * ga[i] * ga[j]
                    h[i][j] = t
                    h[j][i] = t

    val[:] = vals
    if order >= 1:
        grad[:] = grads
    if order >= 2:
        hess[:] = hesses
    return STATUS_OK, -1, 0.0
