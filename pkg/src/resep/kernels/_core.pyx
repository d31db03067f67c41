# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled sliding-window kernels.

gather_windows / scatter_windows are the adjoint pair behind the strided
convolution, its transpose, and 50%-overlap chunking. Both operate on
C-contiguous (time, feature) arrays.
"""

cimport cython

ctypedef fused real:
    float
    double


cpdef void gather_windows(real[:, ::1] x, Py_ssize_t K, Py_ssize_t S,
                          real[:, :, ::1] out) noexcept nogil:
    """out[w, k, f] = x[w*S + k, f] for every full window."""
    cdef Py_ssize_t Nw = out.shape[0]
    cdef Py_ssize_t F = out.shape[2]
    cdef Py_ssize_t w, k, f, base
    for w in range(Nw):
        base = w * S
        for k in range(K):
            for f in range(F):
                out[w, k, f] = x[base + k, f]


cpdef void scatter_windows(real[:, :, ::1] windows, Py_ssize_t S,
                           real[:, ::1] out) noexcept nogil:
    """Overlap-add: out[w*S + k, f] += windows[w, k, f]. out must be zeroed."""
    cdef Py_ssize_t Nw = windows.shape[0]
    cdef Py_ssize_t K = windows.shape[1]
    cdef Py_ssize_t F = windows.shape[2]
    cdef Py_ssize_t w, k, f, base
    for w in range(Nw):
        base = w * S
        for k in range(K):
            for f in range(F):
                out[base + k, f] += windows[w, k, f]
