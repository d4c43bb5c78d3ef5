"""Compiled per-tick kernels for the lattice engine.

Arrays are (channels, width + 2, height + 2) real/imaginary pairs with a
zero ghost ring; windows are given in array coordinates.
"""
import numba
import numpy as np

R = np.sqrt(0.5)


@numba.njit(cache=True, error_model="numpy", boundscheck=False)
def step8(pr, pi, qr, qi, lr, li, x0, x1, y0, y1):
    """One gather-then-coin tick for the 8-channel circulant coin over the node window.

    The coin is applied as inverse-FFT8 . diag(lr + i li) . FFT8, unrolled.
    """
    for x in range(x0,x1+1):
        for y in range(y0,y1+1):
            # gather
            v0r=pr[0,x-1,y];v0i=pi[0,x-1,y]
            v1r=pr[1,x-1,y-1];v1i=pi[1,x-1,y-1]
            v2r=pr[2,x,y-1];v2i=pi[2,x,y-1]
            v3r=pr[3,x+1,y-1];v3i=pi[3,x+1,y-1]
            v4r=pr[4,x+1,y];v4i=pi[4,x+1,y]
            v5r=pr[5,x+1,y+1];v5i=pi[5,x+1,y+1]
            v6r=pr[6,x,y+1];v6i=pi[6,x,y+1]
            v7r=pr[7,x-1,y+1];v7i=pi[7,x-1,y+1]
            # forward fft8 (sgn=-1): multiply by -i: (a+ib)(-i)= b - i a
            b0r=v0r+v4r;b0i=v0i+v4i;b1r=v0r-v4r;b1i=v0i-v4i
            b2r=v2r+v6r;b2i=v2i+v6i;t_r=v2r-v6r;t_i=v2i-v6i;b3r=t_i;b3i=-t_r
            c0r=v1r+v5r;c0i=v1i+v5i;c1r=v1r-v5r;c1i=v1i-v5i
            c2r=v3r+v7r;c2i=v3i+v7i;t_r=v3r-v7r;t_i=v3i-v7i;c3r=t_i;c3i=-t_r
            e0r=b0r+b2r;e0i=b0i+b2i;e2r=b0r-b2r;e2i=b0i-b2i
            e1r=b1r+b3r;e1i=b1i+b3i;e3r=b1r-b3r;e3i=b1i-b3i
            f0r=c0r+c2r;f0i=c0i+c2i;f2r=c0r-c2r;f2i=c0i-c2i
            f1r=c1r+c3r;f1i=c1i+c3i;f3r=c1r-c3r;f3i=c1i-c3i
            # twiddles w1=(R,-R) w2=(0,-1) w3=(-R,-R)
            g1r=R*(f1r+f1i);g1i=R*(f1i-f1r)
            g2r=f2i;g2i=-f2r
            g3r=R*(-f3r+f3i);g3i=R*(-f3i-f3r)
            X0r=e0r+f0r;X0i=e0i+f0i;X4r=e0r-f0r;X4i=e0i-f0i
            X1r=e1r+g1r;X1i=e1i+g1i;X5r=e1r-g1r;X5i=e1i-g1i
            X2r=e2r+g2r;X2i=e2i+g2i;X6r=e2r-g2r;X6i=e2i-g2i
            X3r=e3r+g3r;X3i=e3i+g3i;X7r=e3r-g3r;X7i=e3i-g3i
            # scale
            Y0r=X0r*lr[0]-X0i*li[0];Y0i=X0r*li[0]+X0i*lr[0]
            Y1r=X1r*lr[1]-X1i*li[1];Y1i=X1r*li[1]+X1i*lr[1]
            Y2r=X2r*lr[2]-X2i*li[2];Y2i=X2r*li[2]+X2i*lr[2]
            Y3r=X3r*lr[3]-X3i*li[3];Y3i=X3r*li[3]+X3i*lr[3]
            Y4r=X4r*lr[4]-X4i*li[4];Y4i=X4r*li[4]+X4i*lr[4]
            Y5r=X5r*lr[5]-X5i*li[5];Y5i=X5r*li[5]+X5i*lr[5]
            Y6r=X6r*lr[6]-X6i*li[6];Y6i=X6r*li[6]+X6i*lr[6]
            Y7r=X7r*lr[7]-X7i*li[7];Y7i=X7r*li[7]+X7i*lr[7]
            # inverse fft8 (sgn=+1): multiply by +i: (a+ib)i = -b + i a
            b0r=Y0r+Y4r;b0i=Y0i+Y4i;b1r=Y0r-Y4r;b1i=Y0i-Y4i
            b2r=Y2r+Y6r;b2i=Y2i+Y6i;t_r=Y2r-Y6r;t_i=Y2i-Y6i;b3r=-t_i;b3i=t_r
            c0r=Y1r+Y5r;c0i=Y1i+Y5i;c1r=Y1r-Y5r;c1i=Y1i-Y5i
            c2r=Y3r+Y7r;c2i=Y3i+Y7i;t_r=Y3r-Y7r;t_i=Y3i-Y7i;c3r=-t_i;c3i=t_r
            e0r=b0r+b2r;e0i=b0i+b2i;e2r=b0r-b2r;e2i=b0i-b2i
            e1r=b1r+b3r;e1i=b1i+b3i;e3r=b1r-b3r;e3i=b1i-b3i
            f0r=c0r+c2r;f0i=c0i+c2i;f2r=c0r-c2r;f2i=c0i-c2i
            f1r=c1r+c3r;f1i=c1i+c3i;f3r=c1r-c3r;f3i=c1i-c3i
            # w1=(R,R) w2=(0,1) w3=(-R,R)
            g1r=R*(f1r-f1i);g1i=R*(f1i+f1r)
            g2r=-f2i;g2i=f2r
            g3r=R*(-f3r-f3i);g3i=R*(f3r-f3i)
            qr[0,x,y]=e0r+f0r;qi[0,x,y]=e0i+f0i;qr[4,x,y]=e0r-f0r;qi[4,x,y]=e0i-f0i
            qr[1,x,y]=e1r+g1r;qi[1,x,y]=e1i+g1i;qr[5,x,y]=e1r-g1r;qi[5,x,y]=e1i-g1i
            qr[2,x,y]=e2r+g2r;qi[2,x,y]=e2i+g2i;qr[6,x,y]=e2r-g2r;qi[6,x,y]=e2i-g2i
            qr[3,x,y]=e3r+g3r;qi[3,x,y]=e3i+g3i;qr[7,x,y]=e3r-g3r;qi[7,x,y]=e3i-g3i


@numba.njit(cache=True, boundscheck=False)
def step_dense(pr, pi, qr, qi, cr, ci, dx, dy, x0, x1, y0, y1):
    """Gather-then-coin tick for an arbitrary dense coin (any channel count)."""
    d = dx.shape[0]
    vr = np.empty(d)
    vi = np.empty(d)
    for x in range(x0, x1 + 1):
        for y in range(y0, y1 + 1):
            for j in range(d):
                vr[j] = pr[j, x - dx[j], y - dy[j]]
                vi[j] = pi[j, x - dx[j], y - dy[j]]
            for i in range(d):
                sr = 0.0
                si = 0.0
                for j in range(d):
                    sr += cr[i, j] * vr[j] - ci[i, j] * vi[j]
                    si += cr[i, j] * vi[j] + ci[i, j] * vr[j]
                qr[i, x, y] = sr
                qi[i, x, y] = si


@numba.njit(cache=True)
def damp(pr, pi, ax, ay, af, aid, sinks, x0, x1):
    """Scale listed nodes by their factor and credit the removed mass to their sink."""
    for n in range(ax.shape[0]):
        x = ax[n]
        if x < x0 or x > x1:
            continue
        y = ay[n]
        a = af[n]
        s = 0.0
        for j in range(pr.shape[0]):
            r = pr[j, x, y]
            i = pi[j, x, y]
            s += r * r + i * i
            pr[j, x, y] = r * a
            pi[j, x, y] = i * a
        sinks[aid[n]] += s * (1.0 - a * a)


@numba.njit(cache=True)
def rotate(pr, pi, ax, ay, cr, ci, x0, x1):
    """Multiply every channel of the listed nodes by a per-node unit phasor."""
    for n in range(ax.shape[0]):
        x = ax[n]
        if x < x0 or x > x1:
            continue
        y = ay[n]
        c = cr[n]
        s = ci[n]
        for j in range(pr.shape[0]):
            r = pr[j, x, y]
            i = pi[j, x, y]
            pr[j, x, y] = r * c - i * s
            pi[j, x, y] = r * s + i * c


@numba.njit(cache=True)
def remap(pr, pi, ax, ay, m, b, bid, sinks):
    """Apply node maps: state <- M state, with |B state|^2 credited to sink bid[n]."""
    d = pr.shape[0]
    for n in range(ax.shape[0]):
        x = ax[n]
        y = ay[n]
        v = np.empty(d, np.complex128)
        for j in range(d):
            v[j] = complex(pr[j, x, y], pi[j, x, y])
        w = m[n] @ v
        r = b[n] @ v
        s = 0.0
        for j in range(r.shape[0]):
            s += r[j].real ** 2 + r[j].imag ** 2
        sinks[bid[n]] += s
        for j in range(d):
            pr[j, x, y] = w[j].real
            pi[j, x, y] = w[j].imag


@numba.njit(cache=True)
def tally(pr, pi, xs, fwd, bwd, flux):
    """Net probability flux from column xs to xs + 1 during the next tick, per row."""
    for y in range(flux.shape[0]):
        o = 0.0
        for j in fwd:
            o += pr[j, xs, y + 1] ** 2 + pi[j, xs, y + 1] ** 2
        for j in bwd:
            o -= pr[j, xs + 1, y + 1] ** 2 + pi[j, xs + 1, y + 1] ** 2
        flux[y] += o


@numba.njit(cache=True)
def colmass(pr, pi, x):
    s = 0.0
    for j in range(pr.shape[0]):
        for y in range(pr.shape[2]):
            s += pr[j, x, y] ** 2 + pi[j, x, y] ** 2
    return s


@numba.njit(cache=True)
def clear_column(pr, pi, qr, qi, x):
    for j in range(pr.shape[0]):
        for y in range(pr.shape[2]):
            pr[j, x, y] = 0.0
            pi[j, x, y] = 0.0
            qr[j, x, y] = 0.0
            qi[j, x, y] = 0.0


@numba.njit(cache=True)
def outflow(pr, pi, dx, dy, x0, x1, w, h):
    """Mass in channels that would be gathered from outside the lattice on the next tick."""
    s = 0.0
    for x in range(x0, x1 + 1):
        for y in (1, h):
            for j in range(dx.shape[0]):
                tx = x + dx[j]
                ty = y + dy[j]
                if tx < 1 or tx > w or ty < 1 or ty > h:
                    s += pr[j, x, y] ** 2 + pi[j, x, y] ** 2
    for x in (1, w):
        if x < x0 or x > x1:
            continue
        for y in range(2, h):
            for j in range(dx.shape[0]):
                tx = x + dx[j]
                if tx < 1 or tx > w:
                    s += pr[j, x, y] ** 2 + pi[j, x, y] ** 2
    return s
