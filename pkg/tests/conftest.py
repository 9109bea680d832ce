import pytest

from neurfdiv.distributions import (
    DistributionPair,
    ProductDistribution,
    TruncGauss1D,
    Uniform1D,
    preset_pair,
)


@pytest.fixture
def box2d_pair():
    return preset_pair("gauss_uniform_2d")


def gauss_vs_uniform_1d():
    return DistributionPair(
        ProductDistribution([TruncGauss1D(0.0, 1.0, 0.0, 1.0)]),
        ProductDistribution([Uniform1D(0.0, 1.0)]),
    )


def two_gaussians_1d():
    return DistributionPair(
        ProductDistribution([TruncGauss1D(0.0, 1.0, -1.0, 2.0)]),
        ProductDistribution([TruncGauss1D(0.5, 0.8, -1.0, 2.0)]),
    )


def identical_1d():
    g = ProductDistribution([TruncGauss1D(0.3, 0.7, -1.0, 1.0)])
    return DistributionPair(g, g)


ONE_D_PAIRS = {
    "gauss_vs_uniform": gauss_vs_uniform_1d,
    "two_gaussians": two_gaussians_1d,
    "identical": identical_1d,
}
