from dataclasses import replace

import numpy as np

from gnnbeam import CsiSample


def make_sample(rng, sid="s0", M=2, N=4, K=2, L=1, P0=1.0, rho_th=0.0,
                noisy=False, scale=1.0):
    def cplx(*shape):
        return scale * (rng.normal(size=shape) + 1j * rng.normal(size=shape))

    def links():
        return {
            "G": cplx(N, M),
            "h_ris_cu": cplx(K, N),
            "h_bs_cu": cplx(K, M),
            "h_ris_tgt": cplx(L, N),
        }

    return CsiSample(
        scenario_id=sid, M=M, N=N, K=K, L=L, P0=P0, rho_th=rho_th,
        tau=np.ones(K), noise_var=np.full(K, 1e-2),
        channels=links(), noisy=links() if noisy else None,
        sigma_e2=0.01 if noisy else None,
    )


def _permute_links(links, key_rows):
    if links is None:
        return None
    out = dict(links)
    for key, perm in key_rows:
        out[key] = out[key][perm]
    return out


def permute_users(sample, perm):
    rows = [("h_ris_cu", perm), ("h_bs_cu", perm)]
    return replace(
        sample,
        channels=_permute_links(sample.channels, rows),
        noisy=_permute_links(sample.noisy, rows),
        tau=sample.tau[perm],
        noise_var=sample.noise_var[perm],
    )


def permute_targets(sample, perm):
    rows = [("h_ris_tgt", perm)]
    return replace(
        sample,
        channels=_permute_links(sample.channels, rows),
        noisy=_permute_links(sample.noisy, rows),
    )
