import warnings

import numpy as np
from scipy import linalg
from scipy.stats import unitary_group

from qthermo.common.errors import DimMismatch, NotHermitian


def as_matrix(array, name="matrix", square=False):
    """Converts input to a finite complex 2-d numpy array.

    Args:
        array: array-like, input matrix.
        name: str, name used in error messages.
        square: bool, optional, require a square matrix if set True.

    Returns:
        complex numpy array with ndim 2.
    """
    out = np.asarray(array, dtype=complex)
    if out.ndim != 2:
        raise DimMismatch("{} must be 2-dimensional, got shape {}".format(name, out.shape))
    if square and out.shape[0] != out.shape[1]:
        raise DimMismatch("{} must be square, got shape {}".format(name, out.shape))
    if not np.all(np.isfinite(out)):
        raise ValueError("{} has non-finite entries".format(name))
    return out


def dag(array):
    return np.conjugate(np.swapaxes(array, -1, -2))


def hermitize(array, herm_tol, name="operator"):
    """Symmetrizes an almost Hermitian matrix.

    Args:
        array: array-like, square matrix.
        herm_tol: float, largest accepted entry of A - A^dagger.
        name: str, name used in error messages.

    Returns:
        (A + A^dagger) / 2

    Raises:
        NotHermitian: if the anti-Hermitian part exceeds herm_tol.
    """
    a = as_matrix(array, name=name, square=True)
    deviation = np.max(np.abs(a - dag(a))) if a.size else 0.0
    scale = max(1.0, np.max(np.abs(a))) if a.size else 1.0
    if deviation > herm_tol * scale:
        raise NotHermitian(
            "{} is not Hermitian (max deviation {:.3e})".format(name, deviation),
            deviation=float(deviation),
        )
    return (a + dag(a)) / 2


def ket(index, dim):
    out = np.zeros(dim, dtype=complex)
    out[index] = 1.0
    return out


def proj(vector):
    v = np.asarray(vector, dtype=complex).reshape(-1)
    return np.outer(v, v.conj())


def max_abs(array):
    array = np.asarray(array)
    if array.size == 0:
        return 0.0
    return float(np.max(np.abs(array)))


def op_norm(array):
    return float(np.linalg.norm(array, 2))


def trace_norm(array):
    return float(np.sum(linalg.svdvals(array)))


def commutator(a, b):
    return a @ b - b @ a


def kron_all(*matrices):
    out = np.eye(1, dtype=complex)
    for mat in matrices:
        out = np.kron(out, mat)
    return out


def partial_trace(array, dims, keep):
    """Traces out every tensor factor not listed in keep.

    To use:
    >>> partial_trace(rho_sa, [d_s, d_a], keep=[0])

    Args:
        array: square matrix acting on the tensor product of dims.
        dims: list of int, dimensions of the tensor factors.
        keep: list of int, indices of the factors to keep (in order).

    Returns:
        reduced matrix acting on the kept factors.
    """
    dims = list(dims)
    n = len(dims)
    total = int(np.prod(dims))
    if array.shape != (total, total):
        raise DimMismatch(
            "shape {} does not match tensor dims {}".format(array.shape, dims)
        )
    keep = list(keep)
    traced = [i for i in range(n) if i not in keep]
    tensor = array.reshape(dims + dims)
    # contract traced factors pairwise
    in_labels = list(range(n))
    out_labels = [n + i for i in range(n)]
    for i in traced:
        out_labels[i] = in_labels[i]
    result_labels = [in_labels[i] for i in keep] + [out_labels[i] for i in keep]
    reduced = np.einsum(tensor, in_labels + out_labels, result_labels)
    d_keep = int(np.prod([dims[i] for i in keep])) if keep else 1
    return reduced.reshape(d_keep, d_keep)


def embed_operator(operator, dims, sites):
    """Embeds an operator acting on some tensor factors into the full space.

    Args:
        operator: matrix acting on the product of dims[s] for s in sites
            (in the listed order).
        dims: list of int, dimensions of all tensor factors.
        sites: list of int, factors the operator acts on.

    Returns:
        matrix acting on the full tensor product, identity elsewhere.
    """
    dims = list(dims)
    sites = list(sites)
    rest = [i for i in range(len(dims)) if i not in sites]
    d_rest = int(np.prod([dims[i] for i in rest])) if rest else 1
    full = np.kron(operator, np.eye(d_rest, dtype=complex))
    perm = sites + rest
    inverse = [perm.index(i) for i in range(len(dims))]
    perm_dims = [dims[i] for i in perm]
    n = len(dims)
    total = int(np.prod(dims))
    full = full.reshape(perm_dims + perm_dims)
    full = full.transpose(inverse + [n + i for i in inverse])
    return full.reshape(total, total)


def swap_operator(dim_a, dim_b):
    """Unitary exchanging the two factors of C^dim_a (x) C^dim_b."""
    out = np.zeros((dim_a * dim_b, dim_a * dim_b), dtype=complex)
    for i in range(dim_a):
        for j in range(dim_b):
            out[j * dim_a + i, i * dim_b + j] = 1.0
    return out


def get_rng(seed=None):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def random_unitary(dim, seed=None):
    rng = get_rng(seed)
    if dim == 1:
        return np.exp(2j * np.pi * rng.random()) * np.ones((1, 1), dtype=complex)
    return unitary_group.rvs(dim, random_state=rng)


def random_isometry(dim, rank, seed=None):
    """Haar random dim x rank isometry, QR of a complex Gaussian matrix."""
    rng = get_rng(seed)
    gauss = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    q, r = np.linalg.qr(gauss)
    phases = np.diag(r) / np.abs(np.diag(r))
    return q * phases


def random_state(dim, rank=None, seed=None):
    """Random density matrix of given rank.

    The support is a Haar random rank-dimensional subspace and the state is
    maximally mixed on it.
    """
    rank = dim if rank is None else rank
    iso = random_isometry(dim, rank, seed)
    return iso @ dag(iso) / rank


def random_density(dim, seed=None):
    """Random full-rank density matrix from a Ginibre ensemble."""
    rng = get_rng(seed)
    gauss = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    rho = gauss @ dag(gauss)
    return rho / np.trace(rho).real


def random_psd(dim, rank=None, seed=None):
    rng = get_rng(seed)
    rank = dim if rank is None else rank
    gauss = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    return gauss @ dag(gauss)


def random_hermitian(dim, seed=None):
    rng = get_rng(seed)
    gauss = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return (gauss + dag(gauss)) / 2


def matrix_function(herm, func, floor=None):
    """Applies a scalar function to the spectrum of a Hermitian matrix."""
    values, vectors = linalg.eigh(herm)
    if floor is not None:
        values = np.maximum(values, floor)
    return (vectors * func(values)) @ dag(vectors)


def psd_sqrt(herm):
    values, vectors = linalg.eigh(herm)
    if values.size and values.min() < -1e-8 * max(1.0, values.max()):
        warnings.warn("square root of a matrix with negative eigenvalue {:.3e}".format(values.min()))
    return (vectors * np.sqrt(np.clip(values, 0.0, None))) @ dag(vectors)
