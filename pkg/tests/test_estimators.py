import numpy as np
import pytest
from sklearn.base import clone

from mftsc.clustering import correct_classification_rate
from mftsc.estimators import MFTSC, FunctionalPanelModel, PanelForecaster
from mftsc.simulation import generate_scenario


@pytest.fixture(scope="module")
def sim():
    return generate_scenario("C4d", seed=7, n_grid=51)


def test_panel_model_estimator(sim):
    est = FunctionalPanelModel().fit(sim.panel.values)
    Z = est.transform(sim.panel.values)
    assert Z.shape[:2] == (50, 61)
    assert est.reconstruct().shape == sim.panel.values.shape
    assert clone(est).get_params() == est.get_params()


def test_mftsc_estimator(sim):
    est = MFTSC(random_state=0).fit(sim.panel.values)
    assert correct_classification_rate(est.labels_, sim.truth) >= 0.95
    assert est.n_clusters_ == len(set(est.labels_))
    np.testing.assert_array_equal(est.predict(sim.panel.values), est.labels_)


def test_forecaster_estimator(sim):
    f = PanelForecaster(p_max=2).fit(sim.panel.values, sim.truth)
    assert f.predict(3).shape == (50, 3, 51)
    with pytest.raises(ValueError):
        f.predict(0)


def test_estimators_reject_bad_input():
    with pytest.raises(ValueError):
        FunctionalPanelModel().fit(np.zeros((5, 5)))
    with pytest.raises(ValueError):
        MFTSC().fit(np.full((4, 6, 11), np.nan))
