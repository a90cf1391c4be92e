"""Regenerate the pinned BSIF filter bank.

Samples patches from the texture images bundled with scikit-image (brick,
grass, gravel), whitens them with PCA and runs FastICA with a fixed seed.
The ICA directions are mapped back to pixel space, made exactly zero-mean and
symmetrically orthonormalised before writing.

    python tools/make_filterbank.py src/morphdetect/data/bsif_11x11_8bit.bin
"""

import argparse

import numpy as np
from skimage import data
from sklearn.decomposition import FastICA

from morphdetect.features import read_filterbank, write_filterbank

SIZE = 11
COUNT = 8
N_PATCHES = 50000
SEED = 20210901


def sample_patches(rng):
    images = [data.brick(), data.grass(), data.gravel()]
    per = N_PATCHES // len(images)
    out = []
    for im in images:
        im = im.astype(np.float64) / 255.0
        ys = rng.integers(0, im.shape[0] - SIZE, per)
        xs = rng.integers(0, im.shape[1] - SIZE, per)
        for y, x in zip(ys, xs):
            out.append(im[y:y + SIZE, x:x + SIZE].ravel())
    patches = np.array(out)
    return patches - patches.mean(axis=1, keepdims=True)


def sym_orth(w):
    u, _, vt = np.linalg.svd(w, full_matrices=False)
    return u @ vt


def make_bank():
    rng = np.random.default_rng(SEED)
    x = sample_patches(rng)
    cov = x.T @ x / len(x)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:COUNT]
    e, d = evecs[:, order], evals[order]
    # deterministic eigenvector signs
    e = e * np.sign(e[np.argmax(np.abs(e), axis=0), np.arange(COUNT)])
    z = (x @ e) / np.sqrt(d)
    ica = FastICA(n_components=COUNT, whiten=False, random_state=SEED, max_iter=2000, tol=1e-6)
    ica.fit(z)
    w = ica.components_ @ (e / np.sqrt(d)).T
    w = sym_orth(w)
    w -= w.mean(axis=1, keepdims=True)
    w = sym_orth(w)
    w -= w.mean(axis=1, keepdims=True)
    return w.reshape(COUNT, SIZE, SIZE)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("out")
    args = ap.parse_args()
    write_filterbank(args.out, make_bank())
    bank = read_filterbank(args.out)
    print(f"wrote {args.out}: {bank.shape}")


if __name__ == "__main__":
    main()
