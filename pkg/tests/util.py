"""Small builders shared across test modules."""

from __future__ import annotations

import numpy as np

from metarouter.data import GsSample, PbSample, Query
from metarouter.synthetic import FunctionSpec, GaussianSpec, NoiseSpec, SynthConfig


def q(i, emb, **tokens) -> Query:
    return Query(id=f"q{i}", embedding=np.asarray(emb, dtype=float), **tokens)


def gs(i, emb, r) -> GsSample:
    return GsSample(query=q(i, emb), r=r)


def pb(i, emb, y) -> PbSample:
    return PbSample(query=q(i, emb), y=y)


def synth_config(
    kappa=0.5,
    dim=2,
    q_mean=0.0,
    qp_mean=0.0,
    var=1.0,
    m=None,
    eta=None,
    sigma_gs=0.1,
    sigma_pb=0.1,
    discrete_pb=False,
    seed=0,
) -> SynthConfig:
    m = m if m is not None else FunctionSpec.constant(0.0)
    eta = eta if eta is not None else FunctionSpec.constant(0.0)
    return SynthConfig(
        kappa=kappa,
        dim=dim,
        q_dist=GaussianSpec.create(q_mean, var, dim),
        q_prime_dist=GaussianSpec.create(qp_mean, var, dim),
        m_spec=m,
        eta_spec=eta,
        noise_gs=NoiseSpec.gaussian(sigma_gs),
        noise_pb=NoiseSpec.discrete() if discrete_pb else NoiseSpec.gaussian(sigma_pb),
        seed=seed,
    )
