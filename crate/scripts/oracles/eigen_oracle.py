#!/usr/bin/env python3
"""Arbitrary-precision eigenvalue oracle for the coupled spin Hamiltonian.

Builds H = zfs*Sz^2 + P*Iz^2 + sum_a B0[a]*(ge*S_a - gn*I_a)
         + Apar*Sz@Iz + Aperp*(Sx@Ix + Sy@Iy)
with mpmath at 50 decimal digits and prints sorted eigenvalues.

The construction here is deliberately independent of the Rust crate: spin
matrices are written out from the ladder-operator formula in Python, and the
eigensolve is mpmath's `eighe`. Values printed by this script are frozen into
Rust tests as expected constants.
"""

import mpmath as mp

mp.mp.dps = 50


def spin_matrices(two_s):
    """Spin matrices for spin s = two_s/2, basis ordered m = s..-s."""
    s = mp.mpf(two_s) / 2
    dim = two_s + 1
    ms = [s - k for k in range(dim)]
    sz = mp.zeros(dim)
    sp = mp.zeros(dim)  # S+
    for i, m in enumerate(ms):
        sz[i, i] = m
    for i in range(1, dim):
        m = ms[i]  # S+ |m> = sqrt(s(s+1) - m(m+1)) |m+1>
        sp[i - 1, i] = mp.sqrt(s * (s + 1) - m * (m + 1))
    sm = sp.T  # real entries
    sx = (sp + sm) / 2
    sy = (sp - sm) / (2 * mp.mpc(0, 1))
    return sx, sy, sz


def kron(a, b):
    ra, ca = a.rows, a.cols
    rb, cb = b.rows, b.cols
    out = mp.zeros(ra * rb, ca * cb)
    for i in range(ra):
        for j in range(ca):
            for k in range(rb):
                for l in range(cb):
                    out[i * rb + k, j * cb + l] = a[i, j] * b[k, l]
    return out


def hamiltonian(two_i, zfs, quad_p, ge, gn, apar, aperp, b0):
    sx, sy, sz = spin_matrices(2)  # electron S = 1
    ix, iy, iz = spin_matrices(two_i)
    de = 3
    di = two_i + 1
    eye_e = mp.eye(de)
    eye_i = mp.eye(di)

    def es(m):
        return kron(m, eye_i)

    def ns(m):
        return kron(eye_e, m)

    h = zfs * es(sz) * es(sz) + quad_p * ns(iz) * ns(iz)
    for (ba, se, si) in ((b0[0], sx, ix), (b0[1], sy, iy), (b0[2], sz, iz)):
        if ba != 0:
            h += ba * (ge * es(se) - gn * ns(si))
    h += apar * es(sz) * ns(iz)
    h += aperp * (es(sx) * ns(ix) + es(sy) * ns(iy))
    return h


def eigvals(h):
    vals, _ = mp.eighe(h)
    return sorted(vals[i].real for i in range(h.rows))


def show(name, vals, digits=15):
    print(name)
    for v in vals:
        print("  " + mp.nstr(v, digits))


# Ground-state 14N at 509 G axial: the hyperfine-extraction working point.
gs_n14 = hamiltonian(
    two_i=2,
    zfs=mp.mpf("2870.0"),
    quad_p=mp.mpf("-4.945"),
    ge=mp.mpf("2.799"),
    gn=mp.mpf("3.077e-4"),
    apar=mp.mpf("-2.162"),
    aperp=mp.mpf("-2.62"),
    b0=(mp.mpf(0), mp.mpf(0), mp.mpf("509.0")),
)
show("GS 14N 509 G (apar=-2.162, aperp=-2.62, P=-4.945):", eigvals(gs_n14))

# Excited-state 14N at 50 G axial: contact hyperfine A=50, P=5 (driven-
# polarization working point).
es_n14 = hamiltonian(
    two_i=2,
    zfs=mp.mpf("1420.0"),
    quad_p=mp.mpf("5.0"),
    ge=mp.mpf("2.799"),
    gn=mp.mpf("3.077e-4"),
    apar=mp.mpf("50.0"),
    aperp=mp.mpf("50.0"),
    b0=(mp.mpf(0), mp.mpf(0), mp.mpf("50.0")),
)
show("ES 14N 50 G (A=50 contact, P=5):", eigvals(es_n14))

# GS 15N at 509 G: I=1/2 system for the 6-dim checks.
gs_n15 = hamiltonian(
    two_i=1,
    zfs=mp.mpf("2870.0"),
    quad_p=mp.mpf("0"),
    ge=mp.mpf("2.799"),
    gn=mp.mpf("-4.316e-4"),
    apar=mp.mpf("3.03"),
    aperp=mp.mpf("3.65"),
    b0=(mp.mpf(0), mp.mpf(0), mp.mpf("509.0")),
)
show("GS 15N 509 G (apar=3.03, aperp=3.65):", eigvals(gs_n15))

# Off-axis field sanity point (transverse component exercises all terms):
# GS 14N, B0 = (40, 0, 48) G.
gs_offaxis = hamiltonian(
    two_i=2,
    zfs=mp.mpf("2870.0"),
    quad_p=mp.mpf("-4.945"),
    ge=mp.mpf("2.799"),
    gn=mp.mpf("3.077e-4"),
    apar=mp.mpf("-2.162"),
    aperp=mp.mpf("-2.62"),
    b0=(mp.mpf("40.0"), mp.mpf(0), mp.mpf("48.0")),
)
show("GS 14N B0=(40,0,48) G:", eigvals(gs_offaxis))

# Square-pulse lineshape spot value: delta = Omega, t = 1/(2 Omega).
val = mp.mpf("0.5") * mp.sin(mp.pi / mp.sqrt(2)) ** 2
print("square pulse at delta=Omega, t=1/(2 Omega):", mp.nstr(val, 20))

# Bare electron transition |0> -> |-1> at 509 G: zfs - ge*B.
print("bare ms=0->-1 at 509 G:", mp.nstr(mp.mpf("2870.0") - mp.mpf("2.799") * 509, 20))
