# ---------------------------------------------------------------
# intertwine: multiscale SDEs on Lie groups and principal bundles.
# ---------------------------------------------------------------

"""Small-matrix arithmetic for su(2), u(1) and so(n) and their groups.

Every algebra uses the real inner product <A, B> = tr(A B^*) / 2. Elements are
immutable wrappers around numpy arrays; the engine works on the batched
``*_array`` kernels directly and wraps results only at the API boundary.
"""

import logging

import numpy as np
from scipy.linalg import expm as series_expm

logger = logging.getLogger(__name__)

SU2 = 'su2'
U1 = 'u1'
SO = 'so'
TAGS = (SU2, U1, SO)

ALGEBRA_TOL = 1e-12
GROUP_TOL = 1e-9
REPROJECT_TOL = 1e-12
MAX_DRIFT = 0.1
# one Newton-Schulz pass squares the Gram deviation
NEWTON_SCHULZ_MAX = 1e-6


class NumericDomainError(ArithmeticError):
    pass


class DriftError(ArithmeticError):
    pass


def _check_tag(tag):
    if tag not in TAGS:
        raise NotImplementedError('unknown algebra tag {}'.format(tag))


def _dtype(tag):
    return np.float64 if tag == SO else np.complex128


def dagger(a):
    return np.conj(np.swapaxes(a, -1, -2))


def _square(entries, tag):
    if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
        raise ValueError('expected a square matrix, got shape {}'.format(entries.shape))
    if tag in (SU2, U1) and entries.shape != (2, 2):
        raise ValueError('{} elements are 2x2, got shape {}'.format(tag, entries.shape))
    if not np.all(np.isfinite(entries)):
        raise NumericDomainError('non-finite entries in {} element'.format(tag))


def _algebra_defect(entries, tag):
    if tag == SO:
        return np.max(np.abs(entries + entries.T))
    defect = max(np.max(np.abs(entries + dagger(entries))), abs(np.trace(entries)))
    if tag == U1:
        defect = max(defect, abs(entries[0, 1]), abs(entries[1, 0]))
    return defect


def group_defect(g):
    """Largest entry of |G^* G - I| over the trailing two axes."""
    eye = np.eye(g.shape[-1])
    return np.max(np.abs(dagger(g) @ g - eye), axis=(-2, -1))


class AlgebraElement(object):

    def __init__(self, entries, tag, check=True):
        _check_tag(tag)
        entries = np.array(entries, dtype=_dtype(tag))
        _square(entries, tag)
        if check:
            scale = max(1., float(np.max(np.abs(entries))))
            defect = _algebra_defect(entries, tag)
            if defect > ALGEBRA_TOL * scale:
                raise ValueError('matrix is not in {} (defect {:.3e})'.format(tag, defect))
        entries.setflags(write=False)
        self.entries = entries
        self.tag = tag

    @property
    def n(self):
        return self.entries.shape[0]

    def _wrap(self, entries):
        return AlgebraElement(entries, self.tag, check=False)

    def __add__(self, other):
        _same_algebra(self, other)
        return self._wrap(self.entries + other.entries)

    def __sub__(self, other):
        _same_algebra(self, other)
        return self._wrap(self.entries - other.entries)

    def __neg__(self):
        return self._wrap(-self.entries)

    def __mul__(self, scalar):
        return self._wrap(float(scalar) * self.entries)

    __rmul__ = __mul__

    def norm(self):
        return np.sqrt(inner(self, self))

    def __repr__(self):
        return 'AlgebraElement({}, {!r})'.format(self.tag, self.entries.tolist())


class VectorElement(object):

    def __init__(self, coords):
        coords = np.array(coords, dtype=np.float64).reshape(-1)
        if not np.all(np.isfinite(coords)):
            raise NumericDomainError('non-finite vector coordinates')
        coords.setflags(write=False)
        self.coords = coords
        self.norm = float(np.linalg.norm(coords))

    @property
    def n(self):
        return self.coords.shape[0]

    def unit(self):
        if self.norm == 0.:
            raise ValueError('cannot normalise the zero vector')
        return VectorElement(self.coords / self.norm)

    def __repr__(self):
        return 'VectorElement({!r})'.format(self.coords.tolist())


class GroupElement(object):

    def __init__(self, entries, tag, check=True):
        _check_tag(tag)
        entries = np.array(entries, dtype=_dtype(tag))
        _square(entries, tag)
        if check:
            defect = float(group_defect(entries))
            det_defect = abs(np.linalg.det(entries) - 1.)
            if defect > GROUP_TOL or det_defect > GROUP_TOL:
                raise ValueError('matrix is not in the {} group (|G*G - I| = {:.3e}, |det - 1| = {:.3e})'
                                 .format(tag, defect, det_defect))
            if tag == U1 and max(abs(entries[0, 1]), abs(entries[1, 0])) > GROUP_TOL:
                raise ValueError('U(1) elements are diagonal in SU(2)')
        entries.setflags(write=False)
        self.entries = entries
        self.tag = tag

    @property
    def n(self):
        return self.entries.shape[0]

    def __matmul__(self, other):
        if other.tag != self.tag and not {self.tag, other.tag} <= {SU2, U1}:
            raise ValueError('cannot multiply {} by {}'.format(self.tag, other.tag))
        tag = self.tag if self.tag == other.tag else SU2
        return GroupElement(self.entries @ other.entries, tag)

    def inverse(self):
        return GroupElement(dagger(self.entries), self.tag, check=False)

    def act(self, v):
        return self.entries @ np.asarray(v)

    def __repr__(self):
        return 'GroupElement({}, {!r})'.format(self.tag, self.entries.tolist())


def _same_algebra(a, b):
    if a.tag != b.tag or a.entries.shape != b.entries.shape:
        raise ValueError('algebra mismatch: {}{} vs {}{}'.format(
            a.tag, a.entries.shape, b.tag, b.entries.shape))


def bracket(a, b):
    """Commutator AB - BA."""
    _same_algebra(a, b)
    return AlgebraElement(a.entries @ b.entries - b.entries @ a.entries, a.tag)


def inner(a, b):
    _same_algebra(a, b)
    return inner_array(a.entries, b.entries)


def inner_array(a, b):
    """Batched tr(A B^*) / 2 over the trailing two axes."""
    return 0.5 * np.real(np.sum(a * np.conj(b), axis=(-2, -1)))


def u1_element(theta):
    return AlgebraElement(np.diag([1j * theta, -1j * theta]), U1)


def as_su2(a):
    if a.tag == SU2:
        return a
    if a.tag != U1:
        raise ValueError('only u(1) embeds in su(2), got {}'.format(a.tag))
    return AlgebraElement(a.entries, SU2, check=False)


class OrthonormalBasis(object):
    """Ordered basis validated against tr(AB^*)/2 at construction."""

    def __init__(self, elements):
        elements = tuple(elements)
        if not elements:
            raise ValueError('empty basis')
        for e in elements[1:]:
            _same_algebra(elements[0], e)
        stack = np.stack([e.entries for e in elements])
        gram = inner_array(stack[:, None], stack[None, :])
        defect = float(np.max(np.abs(gram - np.eye(len(elements)))))
        if defect > ALGEBRA_TOL:
            raise ValueError('basis is not orthonormal under tr(AB*)/2 (gram defect {:.3e})'.format(defect))
        gram.setflags(write=False)
        stack.setflags(write=False)
        self.elements = elements
        self.gram = gram
        self.stack = stack

    @property
    def tag(self):
        return self.elements[0].tag

    def __len__(self):
        return len(self.elements)

    def __iter__(self):
        return iter(self.elements)

    def __getitem__(self, i):
        return self.elements[i]

    def coordinates(self, a):
        """Inner products of ``a`` (element or batched array) with every basis element."""
        entries = a.entries if isinstance(a, AlgebraElement) else np.asarray(a)
        return inner_array(entries[..., None, :, :], self.stack)

    def combine(self, coeffs):
        """Sum_k coeffs[..., k] A_k as a batched array."""
        coeffs = np.asarray(coeffs)
        return np.tensordot(coeffs, self.stack, axes=([-1], [0]))


def milnor_basis():
    x1 = np.array([[1j, 0], [0, -1j]])
    x2 = np.array([[0, -1], [1, 0]], dtype=np.complex128)
    x3 = np.array([[0, 1j], [1j, 0]])
    return OrthonormalBasis([AlgebraElement(x, SU2) for x in (x1, x2, x3)])


def so_basis(n):
    """The basis E_ij = e_i e_j^T - e_j e_i^T, i < j, of so(n)."""
    if n < 2:
        raise ValueError('so(n) needs n >= 2, got {}'.format(n))
    elements = []
    for i in range(n):
        for j in range(i + 1, n):
            e = np.zeros((n, n))
            e[i, j] = 1.
            e[j, i] = -1.
            elements.append(AlgebraElement(e, SO))
    return OrthonormalBasis(elements)


def casimir_sum(basis):
    """Sum_l A_l^2 over an orthonormal basis."""
    if not isinstance(basis, OrthonormalBasis):
        basis = OrthonormalBasis(basis)
    total = np.sum(basis.stack @ basis.stack, axis=0)
    return np.real(total) if basis.tag == SO else total


def _su2_exp(a):
    # A^2 = -theta^2 I on su(2)
    theta = np.sqrt(np.abs(a[..., 0, 0]) ** 2 + np.abs(a[..., 0, 1]) ** 2)
    cos = np.cos(theta)[..., None, None]
    sinc = np.sinc(theta / np.pi)[..., None, None]
    return cos * np.eye(2) + sinc * a


def _so2_exp(a):
    theta = a[..., 1, 0]
    c, s = np.cos(theta), np.sin(theta)
    out = np.empty(a.shape)
    out[..., 0, 0] = c
    out[..., 0, 1] = -s
    out[..., 1, 0] = s
    out[..., 1, 1] = c
    return out


def _so3_exp(a):
    theta = np.sqrt(a[..., 2, 1] ** 2 + a[..., 0, 2] ** 2 + a[..., 1, 0] ** 2)
    s1 = np.sinc(theta / np.pi)[..., None, None]
    s2 = 0.5 * np.sinc(theta / (2. * np.pi))[..., None, None] ** 2
    return np.eye(3) + s1 * a + s2 * (a @ a)


def expm_array(a, tag, closed_form=True):
    """Batched exponential: closed forms up to dimension 3, scaling-and-squaring above."""
    a = np.asarray(a)
    if not np.all(np.isfinite(a)):
        raise NumericDomainError('non-finite entries in exponent')
    if closed_form:
        if tag in (SU2, U1):
            return _su2_exp(a)
        if a.shape[-1] == 2:
            return _so2_exp(a)
        if a.shape[-1] == 3:
            return _so3_exp(a)
    return series_expm(a)


def expm(a):
    return GroupElement(expm_array(a.entries, a.tag), a.tag)


def _unit_det(g):
    det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]
    return g / np.sqrt(det)[..., None, None]


def _polar(g, tag):
    u, s, vh = np.linalg.svd(g)
    distance = np.max(np.abs(s - 1.), axis=-1)
    worst = float(np.max(distance))
    if worst > MAX_DRIFT:
        raise DriftError('state drifted {:.3e} from the {} group; reduce the step size'.format(worst, tag))
    out = u @ vh
    if tag == SO and np.any(np.linalg.det(out) < 0):
        raise DriftError('state left the identity component of SO(n)')
    logger.debug('polar reprojection of %d matrices, worst distance %.3e', distance.size, worst)
    return out


def reproject_array(g, tag):
    """Batched nearest group element (polar factor) with unit determinant."""
    g = np.asarray(g, dtype=_dtype(tag))
    if not np.all(np.isfinite(g)):
        raise NumericDomainError('non-finite entries in group state')
    eye = np.eye(g.shape[-1])
    gram = dagger(g) @ g
    out = 0.5 * g @ (3. * eye - gram)
    far = np.max(np.abs(gram - eye), axis=(-2, -1)) > NEWTON_SCHULZ_MAX
    if np.any(far):
        out[far] = _polar(g[far], tag)
    if tag in (SU2, U1):
        out = _unit_det(out)
    if tag == U1:
        out[..., 0, 1] = 0.
        out[..., 1, 0] = 0.
    return out


def reproject(g, tag):
    entries = g.entries if isinstance(g, GroupElement) else g
    return GroupElement(reproject_array(np.asarray(entries)[None], tag)[0], tag)


def haar_array(rng, tag, n, size=()):
    """Haar samples of shape ``size + (d, d)`` drawn from a numpy Generator."""
    size = (size,) if isinstance(size, (int, np.integer)) else tuple(size)
    if tag == U1:
        theta = rng.uniform(0., 2. * np.pi, size)
        out = np.zeros(size + (2, 2), dtype=np.complex128)
        out[..., 0, 0] = np.exp(1j * theta)
        out[..., 1, 1] = np.exp(-1j * theta)
        return out
    if tag == SU2:
        v = rng.standard_normal(size + (4,))
        v /= np.linalg.norm(v, axis=-1, keepdims=True)
        z = v[..., 0] + 1j * v[..., 1]
        w = v[..., 2] + 1j * v[..., 3]
        out = np.empty(size + (2, 2), dtype=np.complex128)
        out[..., 0, 0] = z
        out[..., 0, 1] = -np.conj(w)
        out[..., 1, 0] = w
        out[..., 1, 1] = np.conj(z)
        return out
    if tag != SO:
        raise NotImplementedError('no Haar sampler for {}'.format(tag))
    q, r = np.linalg.qr(rng.standard_normal(size + (n, n)))
    signs = np.sign(np.diagonal(r, axis1=-2, axis2=-1))
    signs[signs == 0] = 1.
    q = q * signs[..., None, :]
    flip = np.where(np.linalg.det(q) < 0, -1., 1.)
    q[..., :, 0] *= flip[..., None]
    return q


def haar_sample(n, stream, tag=None):
    """One Haar-distributed element of SO(n), of U(1) for n = 1, or of SU(2) by tag."""
    if tag is None:
        tag = U1 if n == 1 else SO
    rng = stream if isinstance(stream, np.random.Generator) else stream.generator()
    return GroupElement(haar_array(rng, tag, n), tag)


def group_distance(a, b):
    """Frobenius distance between (batches of) group matrices."""
    a = a.entries if isinstance(a, GroupElement) else np.asarray(a)
    b = b.entries if isinstance(b, GroupElement) else np.asarray(b)
    return np.sqrt(np.sum(np.abs(a - b) ** 2, axis=(-2, -1)))
