# ---------------------------------------------------------------
# intertwine: multiscale SDEs on Lie groups and principal bundles.
# ---------------------------------------------------------------

"""Hopf fibration SU(2) -> S^2 and the frame bundle SO(n+1) -> S^n.

Tangent data is always body-frame (u^{-1} du). On the frame bundle the base
point of R is R e_0, the structure group SO(n) sits in the lower-right block,
the first row/column block is horizontal.
"""

import numpy as np

import lie


class SpherePoint(object):

    def __init__(self, coords):
        coords = np.array(coords, dtype=np.float64).reshape(-1)
        if abs(np.linalg.norm(coords) - 1.) > lie.ALGEBRA_TOL:
            raise ValueError('sphere point must be a unit vector, norm is {!r}'.format(np.linalg.norm(coords)))
        coords.setflags(write=False)
        self.coords = coords

    @property
    def n(self):
        return self.coords.shape[0] - 1

    def __repr__(self):
        return 'SpherePoint({!r})'.format(self.coords.tolist())


class FrameBundlePoint(object):

    def __init__(self, frame):
        if not isinstance(frame, lie.GroupElement):
            frame = lie.GroupElement(frame, lie.SO)
        if frame.tag != lie.SO:
            raise ValueError('frames live in SO(n+1), got {}'.format(frame.tag))
        self.frame = frame
        self.base = SpherePoint(frame.entries[:, 0])

    @property
    def n(self):
        return self.frame.n - 1

    def check_base(self):
        return float(np.max(np.abs(self.frame.entries[:, 0] - self.base.coords))) <= lie.ALGEBRA_TOL


class TangentDecomposition(object):

    def __init__(self, horizontal, vertical, original, theta=None, omega=None):
        self.horizontal = horizontal
        self.vertical = vertical
        self.original = original
        self.theta = theta
        self.omega = omega


def hopf_project_array(u):
    z = u[..., 0, 0]
    w = u[..., 1, 0]
    zw = 2. * z * np.conj(w)
    return np.stack([zw.real, zw.imag, np.abs(z) ** 2 - np.abs(w) ** 2], axis=-1)


def hopf_project(u):
    if not isinstance(u, lie.GroupElement) or u.tag not in (lie.SU2, lie.U1):
        raise ValueError('hopf_project expects an SU(2) group element')
    return SpherePoint(hopf_project_array(u.entries))


def circle_action(u, theta):
    """Right action of the fibre circle, u exp(theta X_1)."""
    return u @ lie.expm(lie.as_su2(lie.u1_element(theta)))


def hopf_connection_split(u, v):
    # u does not enter: the connection is left invariant
    x1, x2, x3 = lie.milnor_basis()
    if v.tag != lie.SU2:
        v = lie.as_su2(v)
    vertical = x1 * lie.inner(v, x1)
    horizontal = v - vertical
    return TangentDecomposition(horizontal, vertical, v,
                                theta=lie.VectorElement([lie.inner(v, x2), lie.inner(v, x3)]))


def horizontal_array(e):
    """Batched H(e): first column e, first row -e^T."""
    e = np.asarray(e, dtype=np.float64)
    n = e.shape[-1]
    out = np.zeros(e.shape[:-1] + (n + 1, n + 1))
    out[..., 1:, 0] = e
    out[..., 0, 1:] = -e
    return out


def vertical_array(a):
    a = np.asarray(a, dtype=np.float64)
    n = a.shape[-1]
    out = np.zeros(a.shape[:-2] + (n + 1, n + 1))
    out[..., 1:, 1:] = a
    return out


def standard_horizontal(e, n):
    if not isinstance(e, lie.VectorElement):
        e = lie.VectorElement(e)
    if e.n != n:
        raise ValueError('direction has dimension {}, sphere dimension is {}'.format(e.n, n))
    return lie.AlgebraElement(horizontal_array(e.coords), lie.SO)


def fundamental_vertical(a):
    if a.tag != lie.SO:
        raise ValueError('structure algebra is so(n), got {}'.format(a.tag))
    return lie.AlgebraElement(vertical_array(a.entries), lie.SO, check=False)


def connection_form(v):
    entries = v.entries if isinstance(v, lie.AlgebraElement) else np.asarray(v)
    return lie.AlgebraElement(entries[..., 1:, 1:], lie.SO)


def canonical_form(v):
    entries = v.entries if isinstance(v, lie.AlgebraElement) else np.asarray(v)
    return lie.VectorElement(entries[1:, 0])


def frame_connection_split(v):
    if v.tag != lie.SO or v.n < 2:
        raise ValueError('frame_connection_split expects an so(n+1) element')
    omega = connection_form(v)
    vertical = fundamental_vertical(omega)
    horizontal = lie.AlgebraElement(v.entries - vertical.entries, lie.SO, check=False)
    return TangentDecomposition(horizontal, vertical, v, theta=canonical_form(v), omega=omega)


def horizontal_lift_step(point, e, h):
    if h < 0:
        raise ValueError('step must be nonnegative, got {}'.format(h))
    if not isinstance(point, FrameBundlePoint):
        point = FrameBundlePoint(point)
    step = lie.expm(h * standard_horizontal(e, point.n))
    return FrameBundlePoint(point.frame @ step)
