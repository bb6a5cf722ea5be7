"""Pure-Python term arithmetic on sparse Grassmann coefficients.

A value is a pair of parallel arrays (keys, vals): keys are uint32 bitmasks
over the odd generators (bit a-1 set means generator a occurs), strictly
increasing, and vals are the nonzero float64 coefficients.  The compiled
kernel in gkernel.pyx implements the same contract.
"""

import numpy as np

BACKEND = "python"

_EMPTY_K = np.empty(0, dtype=np.uint32)
_EMPTY_V = np.empty(0, dtype=np.float64)


def _pack(acc):
    """Dict {mask: coeff} -> sorted parallel arrays, zeros dropped."""
    items = sorted((k, v) for k, v in acc.items() if v != 0.0)
    if not items:
        return _EMPTY_K.copy(), _EMPTY_V.copy()
    keys = np.fromiter((k for k, _ in items), dtype=np.uint32, count=len(items))
    vals = np.fromiter((v for _, v in items), dtype=np.float64, count=len(items))
    return keys, vals


def merge_sign(a, b):
    """Sign of e_A * e_B = sign * e_{A|B} for disjoint masks A, B.

    Equals (-1)**(number of transpositions moving the concatenation of the
    two ascending index lists into ascending order).
    """
    inv = 0
    bb = b
    while bb:
        j = (bb & -bb).bit_length() - 1
        inv += (a >> (j + 1)).bit_count()
        bb &= bb - 1
    return -1 if inv & 1 else 1


def mul_terms(ka, va, kb, vb):
    acc = {}
    kbl = [int(k) for k in kb]
    for i in range(len(ka)):
        a = int(ka[i])
        x = float(va[i])
        for j in range(len(kbl)):
            b = kbl[j]
            if a & b:
                continue
            k = a | b
            term = x * float(vb[j])
            if merge_sign(a, b) < 0:
                term = -term
            acc[k] = acc.get(k, 0.0) + term
    return _pack(acc)


def add_terms(ka, va, kb, vb):
    acc = {}
    for i in range(len(ka)):
        acc[int(ka[i])] = float(va[i])
    for j in range(len(kb)):
        b = int(kb[j])
        acc[b] = acc.get(b, 0.0) + float(vb[j])
    return _pack(acc)


def scale_terms(ka, va, c):
    if c == 0.0 or len(ka) == 0:
        return _EMPTY_K.copy(), _EMPTY_V.copy()
    return ka.copy(), va * c


def lderiv_terms(ka, va, alpha):
    """Left derivative by generator alpha (1-based): the generator is moved
    to the front (picking up a sign per generator it passes) and removed."""
    bit = 1 << (alpha - 1)
    below = bit - 1
    acc = {}
    for i in range(len(ka)):
        k = int(ka[i])
        if not (k & bit):
            continue
        v = float(va[i])
        if (k & below).bit_count() & 1:
            v = -v
        acc[k ^ bit] = v
    return _pack(acc)
