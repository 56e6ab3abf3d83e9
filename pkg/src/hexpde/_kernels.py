"""Sequential sparse kernels compiled with numba.

All kernels take raw CSR arrays (``indptr``, ``indices``, ``data``) with
sorted column indices.  Status codes are returned instead of raising,
the Python wrappers translate them into exceptions.
"""
import heapq

import numba as nb
import numpy as np

# prefer OpenMP, skip the TBB probe that warns on old TBB installs
nb.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

_opts = {"nogil": True, "cache": True}


@nb.njit(**_opts)
def gs_forward(indptr, indices, data, diag, b, x, sweeps):
    n = len(b)
    for _ in range(sweeps):
        for i in range(n):
            s = b[i]
            for p in range(indptr[i], indptr[i + 1]):
                j = indices[p]
                if j != i:
                    s -= data[p] * x[j]
            x[i] = s / diag[i]


@nb.njit(**_opts)
def gs_backward(indptr, indices, data, diag, b, x, sweeps):
    n = len(b)
    for _ in range(sweeps):
        for i in range(n - 1, -1, -1):
            s = b[i]
            for p in range(indptr[i], indptr[i + 1]):
                j = indices[p]
                if j != i:
                    s -= data[p] * x[j]
            x[i] = s / diag[i]


@nb.njit(**_opts)
def ic0_factor(indptr, indices, data):
    """Zero fill-in incomplete Cholesky of the lower triangle (row CSR).

    Returns ``(lvals, status)``; ``status`` is -1 on success, otherwise the
    row whose pivot was not positive.  The last entry of each row must be
    the diagonal.
    """
    n = len(indptr) - 1
    lvals = data.copy()
    pos = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        start, end = indptr[i], indptr[i + 1]
        for p in range(start, end):
            pos[indices[p]] = p
        for p in range(start, end - 1):
            k = indices[p]
            s = lvals[p]
            # row k entries j < k that also sit in row i
            for q in range(indptr[k], indptr[k + 1] - 1):
                r = pos[indices[q]]
                if r >= start and r < p:
                    s -= lvals[r] * lvals[q]
            lvals[p] = s / lvals[indptr[k + 1] - 1]
        d = lvals[end - 1]
        for p in range(start, end - 1):
            d -= lvals[p] * lvals[p]
        for p in range(start, end):
            pos[indices[p]] = -1
        if not d > 0.0:
            return lvals, i
        lvals[end - 1] = np.sqrt(d)
    return lvals, -1


@nb.njit(**_opts)
def lower_solve(indptr, indices, data, b):
    """Solve L y = b, diagonal stored last in each row."""
    n = len(b)
    y = np.empty(n)
    for i in range(n):
        s = b[i]
        end = indptr[i + 1] - 1
        for p in range(indptr[i], end):
            s -= data[p] * y[indices[p]]
        y[i] = s / data[end]
    return y


@nb.njit(**_opts)
def lower_transpose_solve(indptr, indices, data, b):
    """Solve L^T x = b for L stored by rows."""
    n = len(b)
    x = b.copy()
    for i in range(n - 1, -1, -1):
        end = indptr[i + 1] - 1
        x[i] /= data[end]
        xi = x[i]
        for p in range(indptr[i], end):
            x[indices[p]] -= data[p] * xi
    return x


@nb.njit(**_opts)
def strength(indptr, indices, data, theta):
    """Mask of strong couplings: -a_ij >= theta * max_k(-a_ik), j != i."""
    n = len(indptr) - 1
    mask = np.zeros(len(data), dtype=np.bool_)
    for i in range(n):
        m = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            if indices[p] != i and -data[p] > m:
                m = -data[p]
        if m <= 0.0:
            continue
        thr = theta * m
        for p in range(indptr[i], indptr[i + 1]):
            if indices[p] != i and -data[p] >= thr:
                mask[p] = True
    return mask


@nb.njit(**_opts)
def rs_first_pass(s_ptr, s_idx, t_ptr, t_idx):
    """Greedy C/F selection weighted by the number of dependants.

    ``s`` holds S_i (the points i strongly depends on), ``t`` its transpose.
    Returns state per point: 1 = C, 0 = F, 2 = isolated F (no strong
    couplings in either direction).  Ties go to the lowest index.
    """
    n = len(s_ptr) - 1
    state = np.full(n, -1, dtype=np.int64)
    lam = np.empty(n, dtype=np.int64)
    maxdeg = 0
    for i in range(n):
        lam[i] = t_ptr[i + 1] - t_ptr[i]
        maxdeg = max(maxdeg, lam[i], s_ptr[i + 1] - s_ptr[i])
    big = 2 * maxdeg + 2
    heap = [np.int64(0) for _ in range(0)]
    for i in range(n):
        if lam[i] == 0 and s_ptr[i + 1] == s_ptr[i]:
            state[i] = 2
        else:
            heap.append((big - lam[i]) * n + i)
    heapq.heapify(heap)
    while len(heap) > 0:
        key = heapq.heappop(heap)
        i = key % n
        if state[i] != -1 or big - key // n != lam[i]:
            continue
        state[i] = 1
        for p in range(t_ptr[i], t_ptr[i + 1]):
            j = t_idx[p]
            if state[j] == -1:
                state[j] = 0
                for q in range(s_ptr[j], s_ptr[j + 1]):
                    k = s_idx[q]
                    if state[k] == -1:
                        lam[k] += 1
                        heapq.heappush(heap, (big - lam[k]) * n + k)
        for p in range(s_ptr[i], s_ptr[i + 1]):
            j = s_idx[p]
            if state[j] == -1:
                lam[j] -= 1
                heapq.heappush(heap, (big - lam[j]) * n + j)
    return state


@nb.njit(**_opts)
def rs_second_pass(s_ptr, s_idx, g_ptr, g_idx, state):
    """Ensure strongly connected F-points share a C-point.

    For every F-point i and F-point j in S_i, some C-point of S_i must
    appear in row j of the search graph ``g`` (S itself for the strict
    classical test).
    """
    n = len(s_ptr) - 1
    mark = np.full(n, -1, dtype=np.int64)
    for i in range(n):
        if state[i] != 0:
            continue
        for p in range(s_ptr[i], s_ptr[i + 1]):
            if state[s_idx[p]] == 1:
                mark[s_idx[p]] = i
        tentative = -1
        promote_i = False
        for p in range(s_ptr[i], s_ptr[i + 1]):
            j = s_idx[p]
            if state[j] != 0:
                continue
            shared = False
            for q in range(g_ptr[j], g_ptr[j + 1]):
                if mark[g_idx[q]] == i:
                    shared = True
                    break
            if shared:
                continue
            if tentative >= 0:
                promote_i = True
                break
            tentative = j
            mark[j] = i
        if promote_i:
            state[i] = 1
        elif tentative >= 0:
            state[tentative] = 1
    return state


@nb.njit(**_opts)
def direct_interpolation(indptr, indices, data, smask, state, cidx):
    """Classical direct interpolation rows.

    Returns ``(p_ptr, p_idx, p_val, bad)`` where ``bad`` is -1 or the first
    F-point that has strong couplings but no strong C-neighbour.
    """
    n = len(indptr) - 1
    p_ptr = np.zeros(n + 1, dtype=np.int64)
    for i in range(n):
        if state[i] == 1:
            p_ptr[i + 1] = 1
        elif state[i] == 0:
            c = 0
            for p in range(indptr[i], indptr[i + 1]):
                if smask[p] and state[indices[p]] == 1:
                    c += 1
            p_ptr[i + 1] = c
    for i in range(n):
        p_ptr[i + 1] += p_ptr[i]
    p_idx = np.empty(p_ptr[n], dtype=np.int64)
    p_val = np.empty(p_ptr[n])
    for i in range(n):
        out = p_ptr[i]
        if state[i] == 1:
            p_idx[out] = cidx[i]
            p_val[out] = 1.0
            continue
        if state[i] != 0:
            continue
        if p_ptr[i + 1] == out:
            has_strong = False
            for p in range(indptr[i], indptr[i + 1]):
                if smask[p]:
                    has_strong = True
            if has_strong:
                return p_ptr, p_idx, p_val, i
            continue
        diag = 0.0
        neg_all = 0.0
        pos_all = 0.0
        neg_c = 0.0
        pos_c = 0.0
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            a = data[p]
            if j == i:
                diag += a
                continue
            if a < 0.0:
                neg_all += a
            else:
                pos_all += a
            if smask[p] and state[j] == 1:
                if a < 0.0:
                    neg_c += a
                else:
                    pos_c += a
        beta = 0.0
        if pos_c == 0.0:
            diag += pos_all
        else:
            beta = pos_all / pos_c
        alpha = neg_all / neg_c if neg_c != 0.0 else 0.0
        for p in range(indptr[i], indptr[i + 1]):
            j = indices[p]
            if j != i and smask[p] and state[j] == 1:
                a = data[p]
                w = alpha if a < 0.0 else beta
                p_idx[out] = cidx[j]
                p_val[out] = -w * a / diag
                out += 1
    return p_ptr, p_idx, p_val, -1


@nb.njit(error_model="numpy", **_opts)
def jacobians(coords, ref_gradients):
    """Jacobian, determinant and inverse of element maps at tabulated points.

    ``coords`` (ne, nb, 3), ``ref_gradients`` (m, nb, 3); ``jac[e, q, i, j]``
    is d x_i / d xi_j.
    """
    ne, nb, _ = coords.shape
    m = ref_gradients.shape[0]
    jac = np.zeros((ne, m, 3, 3))
    det = np.empty((ne, m))
    inv = np.empty((ne, m, 3, 3))
    for e in range(ne):
        for q in range(m):
            a = jac[e, q]
            for b in range(nb):
                for i in range(3):
                    x = coords[e, b, i]
                    for j in range(3):
                        a[i, j] += x * ref_gradients[q, b, j]
            c00 = a[1, 1] * a[2, 2] - a[1, 2] * a[2, 1]
            c01 = a[0, 2] * a[2, 1] - a[0, 1] * a[2, 2]
            c02 = a[0, 1] * a[1, 2] - a[0, 2] * a[1, 1]
            c10 = a[1, 2] * a[2, 0] - a[1, 0] * a[2, 2]
            c11 = a[0, 0] * a[2, 2] - a[0, 2] * a[2, 0]
            c12 = a[0, 2] * a[1, 0] - a[0, 0] * a[1, 2]
            c20 = a[1, 0] * a[2, 1] - a[1, 1] * a[2, 0]
            c21 = a[0, 1] * a[2, 0] - a[0, 0] * a[2, 1]
            c22 = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
            d = a[0, 0] * c00 + a[0, 1] * c10 + a[0, 2] * c20
            det[e, q] = d
            r = inv[e, q]
            r[0, 0], r[0, 1], r[0, 2] = c00 / d, c01 / d, c02 / d
            r[1, 0], r[1, 1], r[1, 2] = c10 / d, c11 / d, c12 / d
            r[2, 0], r[2, 1], r[2, 2] = c20 / d, c21 / d, c22 / d
    return jac, det, inv


@nb.njit(**_opts)
def q1_laplacian(coords, u, ref_gradients, hess, inv):
    """Physical Laplacian of trilinear expansions, (ne, m).

    Uses H_x = J^-T (H_xi u - sum_k du/dx_k H_xi x_k) J^-1.
    """
    ne = coords.shape[0]
    m = ref_gradients.shape[0]
    out = np.empty((ne, m))
    h = np.empty((3, 3))
    gx = np.empty(3)
    for e in range(ne):
        for q in range(m):
            ji = inv[e, q]
            for j in range(3):
                s = 0.0
                for b in range(8):
                    s += u[e, b] * ref_gradients[q, b, j]
                gx[j] = s
            g0 = gx[0] * ji[0, 0] + gx[1] * ji[1, 0] + gx[2] * ji[2, 0]
            g1 = gx[0] * ji[0, 1] + gx[1] * ji[1, 1] + gx[2] * ji[2, 1]
            g2 = gx[0] * ji[0, 2] + gx[1] * ji[1, 2] + gx[2] * ji[2, 2]
            for i in range(3):
                for j in range(3):
                    s = 0.0
                    for b in range(8):
                        w = u[e, b] - g0 * coords[e, b, 0] - g1 * coords[e, b, 1] - g2 * coords[e, b, 2]
                        s += w * hess[q, b, i, j]
                    h[i, j] = s
            lap = 0.0
            for k in range(3):
                for i in range(3):
                    for j in range(3):
                        lap += ji[i, k] * h[i, j] * ji[j, k]
            out[e, q] = lap
    return out


@nb.njit(parallel=True, cache=True)
def gradient_gram(ref_gradients, inv, wdet):
    """Element stiffness ``sum_q w_q (J^-T grad phi_a) . (J^-T grad phi_b)``.

    Elements are independent, so the loop over them runs in parallel and the
    result does not depend on the thread count.
    """
    ne, m = wdet.shape
    nbf = ref_gradients.shape[1]
    out = np.zeros((ne, nbf, nbf))
    for e in nb.prange(ne):
        g = np.empty((nbf, 3))
        k = out[e]
        for q in range(m):
            ji = inv[e, q]
            w = wdet[e, q]
            for a in range(nbf):
                r0, r1, r2 = ref_gradients[q, a, 0], ref_gradients[q, a, 1], ref_gradients[q, a, 2]
                for j in range(3):
                    g[a, j] = r0 * ji[0, j] + r1 * ji[1, j] + r2 * ji[2, j]
            for a in range(nbf):
                ga0, ga1, ga2 = w * g[a, 0], w * g[a, 1], w * g[a, 2]
                for b in range(a, nbf):
                    k[a, b] += ga0 * g[b, 0] + ga1 * g[b, 1] + ga2 * g[b, 2]
        for a in range(nbf):
            for b in range(a + 1, nbf):
                k[b, a] = k[a, b]
    return out
