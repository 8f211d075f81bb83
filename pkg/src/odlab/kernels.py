"""Inner loops: fast marching, grid-graph Dijkstra, upwind gradients, backtracing.

Every kernel is plain Python over numpy arrays so it runs unchanged when
``ODLAB_DISABLE_JIT=1``; otherwise numba compiles it on first call.  Grid arrays
are indexed ``[i, j]`` with ``i`` along x and ``j`` along y.
"""

import math

import numpy as np

from ._jit import njit

FAR = 0
TRIAL = 1
ACCEPTED = 2

# trace status codes
TRACE_OK = 0
TRACE_STAGNATED = 1
TRACE_BLOCKED = 2
TRACE_EXITED = 3
TRACE_MAXSTEPS = 4


# -- indexed binary min-heap with decrease-key ----------------------------------


@njit(cache=True)
def _sift_up(heap, pos, key, k):
    item = heap[k]
    while k > 0:
        parent = (k - 1) >> 1
        pitem = heap[parent]
        if key[pitem] <= key[item]:
            break
        heap[k] = pitem
        pos[pitem] = k
        k = parent
    heap[k] = item
    pos[item] = k


@njit(cache=True)
def _sift_down(heap, pos, key, k, size):
    item = heap[k]
    while True:
        child = 2 * k + 1
        if child >= size:
            break
        if child + 1 < size and key[heap[child + 1]] < key[heap[child]]:
            child += 1
        citem = heap[child]
        if key[item] <= key[citem]:
            break
        heap[k] = citem
        pos[citem] = k
        k = child
    heap[k] = item
    pos[item] = k


@njit(cache=True)
def _heap_update(heap, pos, key, size, item):
    """Insert ``item`` or restore order after its key decreased; returns new size."""
    if pos[item] < 0:
        heap[size] = item
        pos[item] = size
        _sift_up(heap, pos, key, size)
        return size + 1
    _sift_up(heap, pos, key, pos[item])
    return size


@njit(cache=True)
def _heap_pop(heap, pos, key, size):
    top = heap[0]
    pos[top] = -1
    size -= 1
    if size > 0:
        heap[0] = heap[size]
        pos[heap[0]] = 0
        _sift_down(heap, pos, key, 0, size)
    return top, size


# -- fast marching ---------------------------------------------------------------


@njit(cache=True)
def _solve_quadratic(a, b, f):
    """Upwind update from axis minima ``a``, ``b`` (inf = missing) with cost ``f = s h``."""
    if a > b:
        a, b = b, a
    if not (a < math.inf):
        return math.inf
    if b - a >= f:
        return a + f
    return 0.5 * (a + b + math.sqrt(2.0 * f * f - (a - b) * (a - b)))


@njit(cache=True)
def _known(u, state, ny, nx, i, j):
    if i < 0 or i >= nx or j < 0 or j >= ny:
        return math.inf
    if state[i * ny + j] != ACCEPTED:
        return math.inf
    return u[i, j]


@njit(cache=True)
def _local_update(u, state, nx, ny, i, j, f):
    """Smallest causal update at (i, j) over the 5-point and diagonal-triangle stencils.

    ``f = s h`` is the local cost of one axis step.  Candidates: the classic
    quadratic update per quadrant, the update on each of the eight right
    triangles (axis neighbour, adjacent diagonal neighbour), and the 1D edge
    updates from axis and diagonal neighbours.
    """
    xm = _known(u, state, ny, nx, i - 1, j)
    xp = _known(u, state, ny, nx, i + 1, j)
    ym = _known(u, state, ny, nx, i, j - 1)
    yp = _known(u, state, ny, nx, i, j + 1)
    best = _solve_quadratic(min(xm, xp), min(ym, yp), f)
    fd = f * math.sqrt(2.0)
    half = f / math.sqrt(2.0)
    for q in range(4):
        if q == 0:
            di, dj = 1, 1
        elif q == 1:
            di, dj = -1, 1
        elif q == 2:
            di, dj = -1, -1
        else:
            di, dj = 1, -1
        ud = _known(u, state, ny, nx, i + di, j + dj)
        if not (ud < math.inf):
            continue
        if ud + fd < best:
            best = ud + fd
        for axis in range(2):
            ua = _known(u, state, ny, nx, i + di, j) if axis == 0 else _known(u, state, ny, nx, i, j + dj)
            if not (ua < math.inf):
                continue
            delta = ua - ud
            if delta >= 0.0 and delta <= half:
                cand = ua + math.sqrt(f * f - delta * delta)
                if cand < best:
                    best = cand
    return best


@njit(cache=True)
def _visible(phi, ox, oy, h, x0, y0, x1, y1, tol):
    """Segment test against the interpolated level set, sampled every h/2."""
    dx = x1 - x0
    dy = y1 - y0
    m = int(math.ceil(2.0 * math.sqrt(dx * dx + dy * dy) / h))
    for s in range(1, m):
        t = s / m
        if interp_plain(phi, x0 + t * dx, y0 + t * dy, ox, oy, h) < -tol:
            return False
    return True


@njit(cache=True)
def fmm_kernel(u, free, slow, h, accepted_order, band, phi, ox, oy, reach):
    """First-order fast marching on the 8-neighbour (5-point plus diagonal triangle) stencil.

    ``u`` holds exact values on the source nodes (finite) and ``inf`` elsewhere;
    it is updated in place.  Accepted values are written to ``accepted_order`` in
    acceptance order.  Returns ``(n_accepted, n_monotonicity_violations)``.

    Nodes flagged in ``band`` (the free layer hugging the obstacle) additionally
    relax straight visible chords of up to ``reach`` cells to other band nodes,
    so fronts creeping along the boundary are not limited to lattice directions.
    """
    nx, ny = u.shape
    n = nx * ny
    key = np.full(n, np.inf)
    pos = np.full(n, -1, dtype=np.int64)
    heap = np.empty(n, dtype=np.int64)
    state = np.zeros(n, dtype=np.int8)
    size = 0
    for i in range(nx):
        for j in range(ny):
            if free[i, j] and u[i, j] < math.inf:
                k = i * ny + j
                key[k] = u[i, j]
                state[k] = TRIAL
                size = _heap_update(heap, pos, key, size, k)
    n_acc = 0
    violations = 0
    last = -math.inf
    while size > 0:
        k, size = _heap_pop(heap, pos, key, size)
        i = k // ny
        j = k - i * ny
        state[k] = ACCEPTED
        val = key[k]
        u[i, j] = val
        if val < last - 1e-12:
            violations += 1
        last = val
        accepted_order[n_acc] = val
        n_acc += 1
        for di in range(-1, 2):
            for dj in range(-1, 2):
                ii = i + di
                jj = j + dj
                if ii < 0 or ii >= nx or jj < 0 or jj >= ny or not free[ii, jj]:
                    continue
                kk = ii * ny + jj
                if state[kk] == ACCEPTED:
                    continue
                cand = _local_update(u, state, nx, ny, ii, jj, slow[ii, jj] * h)
                if cand < key[kk]:
                    key[kk] = cand
                    state[kk] = TRIAL
                    size = _heap_update(heap, pos, key, size, kk)
        if reach > 1 and band[i, j]:
            x0 = ox + i * h
            y0 = oy + j * h
            for di in range(-reach, reach + 1):
                for dj in range(-reach, reach + 1):
                    if di * di + dj * dj > reach * reach or (abs(di) <= 1 and abs(dj) <= 1):
                        continue
                    ii = i + di
                    jj = j + dj
                    if ii < 0 or ii >= nx or jj < 0 or jj >= ny or not band[ii, jj]:
                        continue
                    kk = ii * ny + jj
                    if state[kk] == ACCEPTED:
                        continue
                    cand = val + 0.5 * (slow[i, j] + slow[ii, jj]) * h * math.sqrt(di * di + dj * dj)
                    if cand >= key[kk]:
                        continue
                    if not _visible(phi, ox, oy, h, x0, y0, ox + ii * h, oy + jj * h, 0.05 * h):
                        continue
                    key[kk] = cand
                    state[kk] = TRIAL
                    size = _heap_update(heap, pos, key, size, kk)
    return n_acc, violations


# -- label-setting solver on a grid graph ------------------------------------


@njit(cache=True)
def dijkstra_kernel(u, free, A_half, offsets, check_nodes, check_counts, h):
    """Dijkstra on the grid graph with the given neighbour offsets.

    Edge ``(i,j) -> (i+di, j+dj)`` costs ``h sqrt(<A(m) d, d>)`` with ``A`` taken
    at the edge midpoint from the half-resolution table ``A_half[2i+di, 2j+dj]``
    (components a11, a12, a22).  An edge is dropped if any of its check nodes is
    an obstacle node.  ``u`` carries the source values and is updated in place.
    """
    nx, ny = u.shape
    n = nx * ny
    key = np.full(n, np.inf)
    pos = np.full(n, -1, dtype=np.int64)
    heap = np.empty(n, dtype=np.int64)
    done = np.zeros(n, dtype=np.bool_)
    size = 0
    for i in range(nx):
        for j in range(ny):
            if free[i, j] and u[i, j] < math.inf:
                k = i * ny + j
                key[k] = u[i, j]
                size = _heap_update(heap, pos, key, size, k)
    n_edges = offsets.shape[0]
    while size > 0:
        k, size = _heap_pop(heap, pos, key, size)
        i = k // ny
        j = k - i * ny
        done[k] = True
        u[i, j] = key[k]
        for e in range(n_edges):
            di = offsets[e, 0]
            dj = offsets[e, 1]
            ii = i + di
            jj = j + dj
            if ii < 0 or ii >= nx or jj < 0 or jj >= ny or not free[ii, jj]:
                continue
            kk = ii * ny + jj
            if done[kk]:
                continue
            blocked = False
            for c in range(check_counts[e]):
                ci = i + check_nodes[e, c, 0]
                cj = j + check_nodes[e, c, 1]
                if ci < 0 or ci >= nx or cj < 0 or cj >= ny or not free[ci, cj]:
                    blocked = True
                    break
            if blocked:
                continue
            mi = 2 * i + di
            mj = 2 * j + dj
            q = A_half[mi, mj, 0] * di * di + 2.0 * A_half[mi, mj, 1] * di * dj + A_half[mi, mj, 2] * dj * dj
            cand = key[k] + h * math.sqrt(q)
            if cand < key[kk]:
                key[kk] = cand
                size = _heap_update(heap, pos, key, size, kk)
    return 0


# -- upwind gradient ---------------------------------------------------------------


@njit(cache=True)
def upwind_gradient_kernel(u, free, h, gx, gy, one_sided):
    """Upwind finite differences on every free node.

    Along each axis the neighbour with the smaller value is used; if only one
    neighbour is resolved the stencil is one-sided towards it.  ``one_sided`` is
    set where any axis neighbour is masked or unresolved.  Nodes whose stencil
    is blocked on both axes get NaN.
    """
    nx, ny = u.shape
    for i in range(nx):
        for j in range(ny):
            if not free[i, j] or not (u[i, j] < math.inf):
                gx[i, j] = math.nan
                gy[i, j] = math.nan
                one_sided[i, j] = True
                continue
            c = u[i, j]
            flag = False
            blocked = 0
            for axis in range(2):
                if axis == 0:
                    okm = i > 0 and free[i - 1, j] and u[i - 1, j] < math.inf
                    okp = i < nx - 1 and free[i + 1, j] and u[i + 1, j] < math.inf
                    vm = u[i - 1, j] if okm else math.inf
                    vp = u[i + 1, j] if okp else math.inf
                else:
                    okm = j > 0 and free[i, j - 1] and u[i, j - 1] < math.inf
                    okp = j < ny - 1 and free[i, j + 1] and u[i, j + 1] < math.inf
                    vm = u[i, j - 1] if okm else math.inf
                    vp = u[i, j + 1] if okp else math.inf
                if not (okm and okp):
                    flag = True
                if okm and (not okp or vm <= vp):
                    if okp and vm >= c and vp >= c:
                        g = 0.0
                    else:
                        g = (c - vm) / h
                elif okp:
                    g = (vp - c) / h
                else:
                    g = math.nan
                    blocked += 1
                if axis == 0:
                    gx[i, j] = g
                else:
                    gy[i, j] = g
            if blocked == 1:
                # one axis fully masked: keep the resolved component only
                if gx[i, j] != gx[i, j]:
                    gx[i, j] = 0.0
                else:
                    gy[i, j] = 0.0
            one_sided[i, j] = flag


# -- bilinear interpolation ------------------------------------------------------


@njit(cache=True)
def _cell(x, y, ox, oy, h, nx, ny):
    fx = (x - ox) / h
    fy = (y - oy) / h
    i = int(math.floor(fx))
    j = int(math.floor(fy))
    if i < 0:
        i = 0
    elif i > nx - 2:
        i = nx - 2
    if j < 0:
        j = 0
    elif j > ny - 2:
        j = ny - 2
    return i, j, fx - i, fy - j


@njit(cache=True)
def interp_masked(arr, x, y, ox, oy, h):
    """Bilinear interpolation using only finite corners (weights renormalized)."""
    nx, ny = arr.shape
    i, j, tx, ty = _cell(x, y, ox, oy, h, nx, ny)
    acc = 0.0
    wsum = 0.0
    for a in range(2):
        for b in range(2):
            v = arr[i + a, j + b]
            if v < math.inf and v > -math.inf and v == v:
                w = (tx if a else 1.0 - tx) * (ty if b else 1.0 - ty)
                acc += w * v
                wsum += w
    if wsum <= 1e-12:
        return math.nan
    return acc / wsum


@njit(cache=True)
def interp_grad_masked(gx, gy, x, y, ox, oy, h):
    nx, ny = gx.shape
    i, j, tx, ty = _cell(x, y, ox, oy, h, nx, ny)
    ax = 0.0
    ay = 0.0
    wsum = 0.0
    for a in range(2):
        for b in range(2):
            vx = gx[i + a, j + b]
            vy = gy[i + a, j + b]
            if vx == vx and vy == vy:
                w = (tx if a else 1.0 - tx) * (ty if b else 1.0 - ty)
                ax += w * vx
                ay += w * vy
                wsum += w
    if wsum <= 1e-12:
        # nearest resolved node in the surrounding 4x4 block
        best = math.inf
        for a in range(-1, 3):
            for b in range(-1, 3):
                ii = i + a
                jj = j + b
                if ii < 0 or ii >= nx or jj < 0 or jj >= ny:
                    continue
                vx = gx[ii, jj]
                vy = gy[ii, jj]
                if vx == vx and vy == vy:
                    dx = ox + ii * h - x
                    dy = oy + jj * h - y
                    dd = dx * dx + dy * dy
                    if dd < best:
                        best = dd
                        ax = vx
                        ay = vy
        if best == math.inf:
            return math.nan, math.nan
        return ax, ay
    return ax / wsum, ay / wsum


@njit(cache=True)
def interp_plain(arr, x, y, ox, oy, h):
    nx, ny = arr.shape
    i, j, tx, ty = _cell(x, y, ox, oy, h, nx, ny)
    return ((1 - tx) * (1 - ty) * arr[i, j] + tx * (1 - ty) * arr[i + 1, j]
            + (1 - tx) * ty * arr[i, j + 1] + tx * ty * arr[i + 1, j + 1])


# -- backtracing -----------------------------------------------------------------


@njit(cache=True)
def trace_kernel(gx, gy, phi, phix, phiy, ox, oy, h, x0, y0, kx, ky, stop_radius, step,
                 max_steps, max_length, out):
    """Descend ``-grad d`` from (x0, y0) with obstacle sliding.

    Positions are written to ``out`` (shape ``(max_steps + 2, 2)``).  The trace
    stops inside the source ball (appending k0), after travelling
    ``max_length``, or on failure.  Returns ``(n_points, status)``.
    """
    nx, ny = gx.shape
    xmin = ox
    ymin = oy
    xmax = ox + (nx - 1) * h
    ymax = oy + (ny - 1) * h
    x = x0
    y = y0
    out[0, 0] = x
    out[0, 1] = y
    n = 1
    travelled = 0.0
    slow_count = 0
    for _ in range(max_steps):
        if (x - kx) * (x - kx) + (y - ky) * (y - ky) <= stop_radius * stop_radius:
            out[n, 0] = kx
            out[n, 1] = ky
            return n + 1, TRACE_OK
        if travelled >= max_length:
            return n, TRACE_OK
        g0, g1 = interp_grad_masked(gx, gy, x, y, ox, oy, h)
        gn = math.sqrt(g0 * g0 + g1 * g1)
        if not (gn > 1e-12):
            return n, TRACE_BLOCKED
        vx = -g0 / gn
        vy = -g1 / gn
        nxp = x + step * vx
        nyp = y + step * vy
        if interp_plain(phi, nxp, nyp, ox, oy, h) < 0.0:
            px = interp_plain(phix, x, y, ox, oy, h)
            py = interp_plain(phiy, x, y, ox, oy, h)
            pn = math.sqrt(px * px + py * py)
            if pn > 1e-12:
                px /= pn
                py /= pn
                dot = vx * px + vy * py
                if dot < 0.0:
                    vx -= dot * px
                    vy -= dot * py
                    vn = math.sqrt(vx * vx + vy * vy)
                    if vn < 1e-9:
                        return n, TRACE_STAGNATED
                    vx /= vn
                    vy /= vn
                nxp = x + step * vx
                nyp = y + step * vy
                for _k in range(4):
                    pv = interp_plain(phi, nxp, nyp, ox, oy, h)
                    if pv >= 0.0:
                        break
                    qx = interp_plain(phix, nxp, nyp, ox, oy, h)
                    qy = interp_plain(phiy, nxp, nyp, ox, oy, h)
                    qq = qx * qx + qy * qy
                    if qq < 1e-24:
                        break
                    nxp -= pv * qx / qq
                    nyp -= pv * qy / qq
        dx = nxp - x
        dy = nyp - y
        moved = math.sqrt(dx * dx + dy * dy)
        if moved < 1e-3 * h:
            slow_count += 1
            if slow_count >= 20:
                return n, TRACE_STAGNATED
        else:
            slow_count = 0
        x = nxp
        y = nyp
        travelled += moved
        if x < xmin or x > xmax or y < ymin or y > ymax:
            return n, TRACE_EXITED
        out[n, 0] = x
        out[n, 1] = y
        n += 1
    return n, TRACE_MAXSTEPS


@njit(cache=True)
def initial_directions_kernel(gx, gy, phi, phix, phiy, ox, oy, h, starts, kx, ky, stop_radius, step,
                              n_steps, dirs, status):
    """Short traces from each start; ``dirs[k]`` is the unit chord of trace k."""
    buf = np.empty((n_steps + 2, 2))
    for s in range(starts.shape[0]):
        npts, st = trace_kernel(gx, gy, phi, phix, phiy, ox, oy, h, starts[s, 0], starts[s, 1], kx, ky,
                                stop_radius, step, n_steps, math.inf, buf)
        status[s] = st
        dx = buf[npts - 1, 0] - starts[s, 0]
        dy = buf[npts - 1, 1] - starts[s, 1]
        dn = math.sqrt(dx * dx + dy * dy)
        if npts < 2 or dn < 1e-12:
            dirs[s, 0] = math.nan
            dirs[s, 1] = math.nan
            if st == TRACE_OK:
                status[s] = TRACE_BLOCKED
        else:
            dirs[s, 0] = dx / dn
            dirs[s, 1] = dy / dn


# -- jump detection ----------------------------------------------------------------


@njit(cache=True)
def direction_jump_kernel(gx, gy, cos_thresh, flags):
    """Flag node pairs (4-neighbours) whose gradient directions differ beyond the threshold."""
    nx, ny = gx.shape
    for i in range(nx):
        for j in range(ny):
            ax = gx[i, j]
            ay = gy[i, j]
            an = math.sqrt(ax * ax + ay * ay)
            if not (an > 1e-12):
                continue
            for d in range(2):
                ii = i + 1 if d == 0 else i
                jj = j + 1 if d == 1 else j
                if ii >= nx or jj >= ny:
                    continue
                bx = gx[ii, jj]
                by = gy[ii, jj]
                bn = math.sqrt(bx * bx + by * by)
                if not (bn > 1e-12):
                    continue
                if (ax * bx + ay * by) / (an * bn) < cos_thresh:
                    flags[i, j] = True
                    flags[ii, jj] = True
