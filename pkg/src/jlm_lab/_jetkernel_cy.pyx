# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled tape kernel: second-order jet propagation over instruction tapes.

Bit-compatible twin of ``_jetkernel_py``; see that module for the tape and
status conventions.  Compiled without -ffast-math so both kernels round
identically.
"""

from libc.math cimport cos, exp, floor, log, pow, sin, sqrt


def eval_tape(const int[::1] ops, const int[::1] arg_a, const int[::1] arg_b,
              const double[::1] consts, const double[::1] point, int order,
              double[::1] val, double[:, ::1] grad, double[:, :, ::1] hess):
    """Run the instruction tape at ``point``; see _jetkernel_py.eval_tape."""
    cdef int n_instr = ops.shape[0]
    cdef int nv = point.shape[0]
    cdef int k, i, j, op, ia, ib
    cdef double va, vb, v, c, d1, d2, t

    for k in range(n_instr):
        op = ops[k]
        ia = arg_a[k]

        if op == 0:  # CONST
            val[k] = consts[k]
            continue

        if op == 1:  # VAR
            val[k] = point[ia]
            if order >= 1:
                grad[k, ia] = 1.0
            continue

        va = val[ia]

        if op <= 5:  # binary: ADD, SUB, MUL, DIV
            ib = arg_b[k]
            vb = val[ib]
            if op == 2:  # ADD
                val[k] = va + vb
                if order >= 1:
                    for i in range(nv):
                        grad[k, i] = grad[ia, i] + grad[ib, i]
                if order >= 2:
                    for i in range(nv):
                        for j in range(i, nv):
                            t = hess[ia, i, j] + hess[ib, i, j]
                            hess[k, i, j] = t
                            hess[k, j, i] = t
            elif op == 3:  # SUB
                val[k] = va - vb
                if order >= 1:
                    for i in range(nv):
                        grad[k, i] = grad[ia, i] - grad[ib, i]
                if order >= 2:
                    for i in range(nv):
                        for j in range(i, nv):
                            t = hess[ia, i, j] - hess[ib, i, j]
                            hess[k, i, j] = t
                            hess[k, j, i] = t
            elif op == 4:  # MUL
                val[k] = va * vb
                if order >= 1:
                    for i in range(nv):
                        grad[k, i] = va * grad[ib, i] + vb * grad[ia, i]
                if order >= 2:
                    for i in range(nv):
                        for j in range(i, nv):
                            t = (va * hess[ib, i, j] + vb * hess[ia, i, j]
                                 + grad[ia, i] * grad[ib, j] + grad[ib, i] * grad[ia, j])
                            hess[k, i, j] = t
                            hess[k, j, i] = t
            else:  # DIV
                if vb == 0.0:
                    return 1, k, vb
                v = va / vb
                val[k] = v
                if order >= 1:
                    for i in range(nv):
                        grad[k, i] = (grad[ia, i] - v * grad[ib, i]) / vb
                if order >= 2:
                    for i in range(nv):
                        for j in range(i, nv):
                            t = (hess[ia, i, j] - grad[k, i] * grad[ib, j]
                                 - grad[ib, i] * grad[k, j] - v * hess[ib, i, j]) / vb
                            hess[k, i, j] = t
                            hess[k, j, i] = t
            continue

        if op == 6:  # NEG
            val[k] = -va
            if order >= 1:
                for i in range(nv):
                    grad[k, i] = -grad[ia, i]
            if order >= 2:
                for i in range(nv):
                    for j in range(i, nv):
                        t = -hess[ia, i, j]
                        hess[k, i, j] = t
                        hess[k, j, i] = t
            continue

        if op == 7:  # POW, constant exponent
            c = consts[k]
            if c == floor(c):
                if va == 0.0:
                    if c < 0.0:
                        return 5, k, va
                    v = 1.0 if c == 0.0 else 0.0
                    d1 = 1.0 if c == 1.0 else 0.0
                    d2 = 2.0 if c == 2.0 else 0.0
                else:
                    v = pow(va, c)
                    d1 = c * pow(va, c - 1.0)
                    d2 = c * (c - 1.0) * pow(va, c - 2.0)
            else:
                if va <= 0.0:
                    return 4, k, va
                v = pow(va, c)
                d1 = c * pow(va, c - 1.0)
                d2 = c * (c - 1.0) * pow(va, c - 2.0)
        elif op == 8:  # EXP
            v = exp(va)
            d1 = v
            d2 = v
        elif op == 9:  # LN
            if va <= 0.0:
                return 2, k, va
            v = log(va)
            d1 = 1.0 / va
            d2 = -(d1 * d1)
        elif op == 10:  # SIN
            v = sin(va)
            d1 = cos(va)
            d2 = -v
        elif op == 11:  # COS
            v = cos(va)
            d1 = -sin(va)
            d2 = -v
        else:  # SQRT
            if va <= 0.0:
                return 3, k, va
            v = sqrt(va)
            d1 = 0.5 / v
            d2 = -0.5 * d1 / va

        val[k] = v
        if order >= 1:
            for i in range(nv):
                grad[k, i] = d1 * grad[ia, i]
        if order >= 2:
            for i in range(nv):
                for j in range(i, nv):
                    t = d1 * hess[ia, i, j] + d2 * grad[ia, i] * grad[ia, j]
                    hess[k, i, j] = t
                    hess[k, j, i] = t

    return 0, -1, 0.0
