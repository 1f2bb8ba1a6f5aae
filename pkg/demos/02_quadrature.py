# coding: utf-8

# # Gibbs Gramians by quadrature
#
# Given a cost L(x), the Gibbs density is proportional to exp(-L(x)) and its
# second moment is the Gibbs Gramian. A quadratic cost 1/2 x^T G^{-1} x
# gives back G exactly, which is a handy self-test.

import numpy as np

from gibbsgram import gibbs_gramian_quadrature

G = np.array([[1.0, 0.4], [0.4, 0.5]])
Ginv = np.linalg.inv(G)


def quadratic(x):
    return 0.5 * np.einsum("ni,ij,nj->n", x, Ginv, x)


Q = gibbs_gramian_quadrature(quadratic, [(-9, 9), (-9, 9)], 241)
print("recovered\n", Q.matrix)
print("error", np.linalg.norm(Q.matrix - G))

# A non-quadratic cost: L(x) = x^4. The density is flatter than a Gaussian
# near the origin and its tails are much lighter.

q4 = gibbs_gramian_quadrature(lambda x: x[:, 0] ** 4, [(-4, 4)], 801)
print("x^4 Gramian:", q4.matrix[0, 0])

# Temperature divides the cost, so a Gaussian Gramian scales linearly in T.

for T in (0.25, 1.0, 4.0):
    QT = gibbs_gramian_quadrature(quadratic, [(-30, 30)] * 2, 401, temperature=T)
    print(f"T={T}: G_T / T =", np.round(QT.matrix / T, 8).tolist())

# If the box cuts off too much mass the quadrature refuses to answer.

try:
    gibbs_gramian_quadrature(quadratic, [(-1, 1), (-1, 1)], 41)
except Exception as exc:
    print(type(exc).__name__, "-", exc)
