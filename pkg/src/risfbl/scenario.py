"""A full link configuration and the published simulation defaults."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .channel import (
    LinkGeometry,
    NakagamiLink,
    NoiseModel,
    RISConfig,
    apply_ris_noise_convention,
    db_to_linear,
    omega_from_geometry,
)
from .fbl import ClosedFormInputs, FBLParams

TABLE1 = {
    "m_bn": 3.0,
    "m_nd": 3.0,
    "d_bn": 125.0,
    "d_nd": 3.0,
    "tau_bn": 3.1,
    "tau_nd": 1.7,
    "varsigma": 1.0,
    "bandwidth_hz": 10e6,
    "beta": 0.9,
    "blocklength": 500,
    "payload_bits": 200,
    "sigma_d_sq_db": -131.5,
    "noise_figure_db": 3.0,
    "temperature": 290.0,
}


@dataclass(frozen=True)
class Scenario:
    """Links, surface, noise and coding parameters of one evaluation point.

    ``noise`` holds the physical model; ``ris_noise_convention`` decides
    which sigma_r^2 enters the SINR (see channel.apply_ris_noise_convention).
    """

    link_bn: NakagamiLink
    link_nd: NakagamiLink
    ris: RISConfig
    noise: NoiseModel
    fbl: FBLParams
    ris_noise_convention: str = "per-element"
    training_uses: int = 0

    @property
    def effective_noise(self) -> NoiseModel:
        return apply_ris_noise_convention(self.noise, self.ris, self.ris_noise_convention)

    @property
    def noise_ratio(self) -> float:
        return self.effective_noise.noise_ratio

    def rho(self, p_dbm: float) -> float:
        return float(self.noise.rho(p_dbm))

    def replace(self, **changes) -> "Scenario":
        return dataclasses.replace(self, **changes)

    def inputs(self, p_dbm: float, noise_mode: str = "with-ris-noise",
               param_mode: str = "derived") -> ClosedFormInputs:
        return ClosedFormInputs(
            rho=self.rho(p_dbm),
            noise_ratio=self.noise_ratio,
            link_bn=self.link_bn,
            link_nd=self.link_nd,
            ris=self.ris,
            fbl=self.fbl,
            noise_mode=noise_mode,
            param_mode=param_mode,
        )


def table1_scenario(n_elements: int = 10, beta=None, blocklength: int | None = None,
                    payload_bits: float | None = None,
                    ris_noise_convention: str = "aggregate", **overrides) -> Scenario:
    """Scenario built from the published simulation table.

    ``beta`` may be a scalar (uniform surface) or a sequence of per-element
    coefficients (its length then sets N).
    """
    p = dict(TABLE1)
    p.update(overrides)
    geom = LinkGeometry(p["d_bn"], p["d_nd"], p["tau_bn"], p["tau_nd"], p["varsigma"])
    omega_bn, omega_nd = omega_from_geometry(geom)
    if beta is None:
        beta = p["beta"]
    if isinstance(beta, (int, float)):
        ris = RISConfig.uniform_config(n_elements, float(beta))
    else:
        ris = RISConfig(tuple(beta))
    sd = p["sigma_d_sq_db"]
    noise = NoiseModel(
        bandwidth_hz=p["bandwidth_hz"],
        temperature=p["temperature"],
        noise_figure_lambda=float(db_to_linear(p["noise_figure_db"])),
        sigma_d_sq_override=None if sd is None else float(db_to_linear(sd)),
    )
    fbl = FBLParams(blocklength or p["blocklength"], payload_bits or p["payload_bits"])
    return Scenario(NakagamiLink(p["m_bn"], omega_bn), NakagamiLink(p["m_nd"], omega_nd),
                    ris, noise, fbl, ris_noise_convention)
