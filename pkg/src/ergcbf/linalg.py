"""Small dense linear algebra used by the safety-margin machinery.

Everything here works on plain ``numpy`` arrays and is written for the
state dimensions that occur in this package (n <= 12).  The routines are
deliberately simple so that each one can be checked against an
independent computation in the test suite.
"""

import numpy as np


class LinalgError(ValueError):
    """Raised when an input violates the precondition of a routine."""


def _square(M, name="matrix"):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise LinalgError(f"{name} must be square, got shape {M.shape}")
    return M


def _check_symmetric(S, name="matrix"):
    scale = max(1.0, np.linalg.norm(S))
    if np.max(np.abs(S - S.T), initial=0.0) > 1e-12 * scale:
        raise LinalgError(f"{name} is not symmetric")


def charpoly(M):
    """Characteristic polynomial coefficients of ``M`` (highest power first).

    Faddeev-LeVerrier recursion; exact in exact arithmetic and accurate
    enough for the n <= 4 matrices it is used on.
    """
    M = _square(M)
    n = M.shape[0]
    coeffs = [1.0]
    Mk = np.zeros_like(M)
    ck = 1.0
    eye = np.eye(n)
    for k in range(1, n + 1):
        Mk = M @ Mk + ck * eye
        ck = -np.trace(M @ Mk) / k
        coeffs.append(ck)
    return np.array(coeffs)


def _hessenberg(M):
    """Householder reduction to upper Hessenberg form (similarity)."""
    H = M.copy()
    n = H.shape[0]
    for k in range(n - 2):
        x = H[k + 1:, k].copy()
        alpha = np.linalg.norm(x)
        if alpha == 0.0:
            continue
        v = x
        v[0] += np.copysign(alpha, x[0])
        v /= np.linalg.norm(v)
        H[k + 1:, :] -= 2.0 * np.outer(v, v @ H[k + 1:, :])
        H[:, k + 1:] -= 2.0 * np.outer(H[:, k + 1:] @ v, v)
    return H


def qr_eigenvalues(M, max_iter=10_000, tol=1e-12):
    """Eigenvalues of a general real matrix by unshifted QR iteration.

    The iterate converges to a quasi-triangular form; 2x2 diagonal blocks
    that never split carry complex-conjugate pairs and are solved in
    closed form.  Returns ``(eigenvalues, converged)``.
    """
    T = _hessenberg(_square(M))
    n = T.shape[0]
    scale = max(1.0, np.linalg.norm(T))
    converged = False
    for _ in range(max_iter):
        Qf, Rf = np.linalg.qr(T)
        T = Rf @ Qf
        sub = np.abs(np.diag(T, -1))
        small = sub <= tol * scale
        # converged when no two consecutive subdiagonal entries are both large
        if not np.any(~small[:-1] & ~small[1:]):
            converged = True
            break
    eigs = []
    i = 0
    while i < n:
        if i + 1 < n and abs(T[i + 1, i]) > tol * scale:
            a, b, c, d = T[i, i], T[i, i + 1], T[i + 1, i], T[i + 1, i + 1]
            tr, det = a + d, a * d - b * c
            disc = complex(tr * tr / 4.0 - det)
            root = disc ** 0.5
            eigs.extend([tr / 2.0 + root, tr / 2.0 - root])
            i += 2
        else:
            eigs.append(complex(T[i, i]))
            i += 1
    return np.array(eigs), converged


def eigenvalues(M):
    """Eigenvalues of a square real matrix.

    Characteristic-polynomial roots for n <= 4, QR iteration otherwise.
    When the unshifted iteration hits its cap (equal-modulus eigenvalues
    can stall it) LAPACK is used instead.
    """
    M = _square(M)
    if M.shape[0] <= 4:
        return np.roots(charpoly(M)).astype(complex)
    eigs, ok = qr_eigenvalues(M)
    if not ok:
        eigs = np.linalg.eigvals(M)
    return eigs


def is_hurwitz(M):
    """True iff every eigenvalue of ``M`` has strictly negative real part."""
    M = _square(M)
    if not np.all(np.isfinite(M)):
        return False
    return bool(np.all(eigenvalues(M).real < 0.0))


def spectral_abscissa(M):
    """Largest real part among the eigenvalues of ``M``."""
    return float(np.max(eigenvalues(M).real))


def cholesky(P):
    """Lower-triangular ``L`` with ``L @ L.T == P`` (Cholesky-Banachiewicz)."""
    P = _square(P, "P")
    _check_symmetric(P, "P")
    n = P.shape[0]
    L = np.zeros_like(P)
    for i in range(n):
        for j in range(i + 1):
            s = P[i, j] - L[i, :j] @ L[j, :j]
            if i == j:
                if s <= 0.0:
                    raise LinalgError(f"matrix is not positive definite (pivot {i} = {s:.3e})")
                L[i, i] = np.sqrt(s)
            else:
                L[i, j] = s / L[j, j]
    return L


def is_spd(P):
    try:
        cholesky(P)
    except LinalgError:
        return False
    return True


def jacobi_eigenvalues(S, tol=1e-15, max_sweeps=100):
    """All eigenvalues of a symmetric matrix by cyclic Jacobi rotations."""
    A = _square(S, "S").copy()
    _check_symmetric(A, "S")
    n = A.shape[0]
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.tril(A, -1) ** 2))
        if off <= tol * max(1.0, np.linalg.norm(A)):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if A[p, q] == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * A[p, q])
                t = np.copysign(1.0, theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                J = np.eye(n)
                J[p, p] = J[q, q] = c
                J[p, q] = s
                J[q, p] = -s
                A = J.T @ A @ J
    return np.sort(np.diag(A))


def max_sym_eig(S):
    """Largest eigenvalue of a symmetric matrix."""
    return float(jacobi_eigenvalues(S)[-1])


def min_sym_eig(S):
    return float(jacobi_eigenvalues(S)[0])


def solve_lyapunov(Acl, Q):
    """Solve ``Acl.T @ P + P @ Acl = -Q`` for the symmetric positive-definite P.

    Uses the vectorised (Kronecker) form ``(I kron Acl.T + Acl.T kron I) vec(P) = -vec(Q)``.
    """
    Acl = _square(Acl, "Acl")
    Q = _square(Q, "Q")
    n = Acl.shape[0]
    if Q.shape[0] != n:
        raise LinalgError(f"Q has shape {Q.shape}, expected ({n}, {n})")
    _check_symmetric(Q, "Q")
    if not is_spd(Q):
        raise LinalgError("Q must be symmetric positive definite")
    if not is_hurwitz(Acl):
        raise LinalgError("closed-loop matrix is not Hurwitz; the Lyapunov equation has no unique SPD solution")
    eye = np.eye(n)
    kron = np.kron(eye, Acl.T) + np.kron(Acl.T, eye)
    vecP = np.linalg.solve(kron, -Q.reshape(-1, order="F"))
    P = vecP.reshape((n, n), order="F")
    return 0.5 * (P + P.T)


def lyapunov_residual(Acl, P, Q):
    return float(np.linalg.norm(Acl.T @ P + P @ Acl + Q))


def output_gain(P, C):
    """Constant ``l`` with ``||C z||^2 <= l^2 z' P z`` for every z.

    ``l = sqrt(lambda_max(L^-1 C' C L^-T))`` with ``P = L L'``.
    """
    P = _square(P, "P")
    C = np.atleast_2d(np.asarray(C, dtype=float))
    if C.shape[1] != P.shape[0]:
        raise LinalgError(f"C has {C.shape[1]} columns but P is {P.shape[0]}x{P.shape[0]}")
    L = cholesky(P)
    Linv = np.linalg.solve(L, np.eye(P.shape[0]))
    S = Linv @ C.T @ C @ Linv.T
    S = 0.5 * (S + S.T)
    return float(np.sqrt(max(max_sym_eig(S), 0.0)))


def output_gain_direction(P, C):
    """State direction ``z`` along which the output-gain bound is tight."""
    L = cholesky(P)
    Linv = np.linalg.solve(L, np.eye(P.shape[0]))
    S = Linv @ np.asarray(C).T @ np.asarray(C) @ Linv.T
    w, V = np.linalg.eigh(0.5 * (S + S.T))
    return np.linalg.solve(L.T, V[:, -1])
