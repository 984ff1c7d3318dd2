import numpy as np
import pytest

from coevolab.nkcs import NkcsConfig, NkcsModel, TableOracle

# species 1 tables from the worked example; rows are the context read MSB first
# (own allele, intra link, partner allele)
FIG1_S1 = np.array([
    [0.57, 0.12, 0.09, 0.16, 0.44, 0.66, 0.33, 0.44],
    [0.11, 0.32, 0.68, 0.30, 0.19, 0.77, 0.21, 0.23],
    [0.75, 0.42, 0.25, 0.28, 0.13, 0.58, 0.66, 0.91],
])


def make_fig1_model(s2_value=0.5):
    cfg = NkcsConfig(n_genes=3, k_intra=1, c_inter=1, n_species=2, topology="chain", seed=0)
    intra = np.array([[[2], [0], [1]],   # s1: n1<-n3, n2<-n1, n3<-n2
                      [[1], [0], [1]]])
    inter = [{1: np.array([[0], [2], [2]])},  # s1: n1<-s2n1, n2<-s2n3, n3<-s2n3
             {0: np.array([[0], [1], [2]])}]
    tables = [FIG1_S1, np.full((3, 8), s2_value)]
    return NkcsModel(cfg, intra, inter, TableOracle(tables))


@pytest.fixture
def fig1_model():
    return make_fig1_model()
