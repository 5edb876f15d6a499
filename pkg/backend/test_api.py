import pytest

import api
from tariff import CHARGE_TABLE

SMALL = {'population.n_agents': 50, 'lot.capacity': 60, 'run.horizon_days': 20, 'run.replications': 2,
         'adoption.ad_rate': 3.0}


@pytest.fixture
def client():
    api.app.config['TESTING'] = True
    return api.app.test_client()


def test_health(client):
    response = client.get('/health')
    assert response.status_code == 200
    assert response.get_json() == {'status': 'ok'}


def test_presets(client):
    presets = client.get('/api/presets').get_json()['presets']
    names = [p['name'] for p in presets]
    assert names == ['exp1', 'exp2', 'awareness', 'subsidy']
    exp1 = presets[0]
    assert exp1['sweep_key'] == 'tariff.ev_strategy'
    assert exp1['overrides']['lot.capacity'] == '600'


def test_tariff_table(client):
    body = client.get('/api/tariff').get_json()
    assert body['levels'] == [1, 2, 3, 4, 5, 6, 7]
    assert body['table']['E'] == list(CHARGE_TABLE[4])
    assert body['ev_strategy'] == 'same_as_a'
    assert body['ev_charges'] == list(CHARGE_TABLE[0])


def test_tariff_with_free_ev_parking(client):
    body = client.get('/api/tariff?ev_strategy=multiplier:0.0').get_json()
    assert body['ev_charges'] == [0.0] * 7
    assert client.get('/api/tariff?ev_strategy=discount').status_code == 400


def test_validate_scenario_json(client):
    response = client.post('/api/scenarios/validate', json={'scenario': "lot.capacity = 600\n"})
    body = response.get_json()
    assert response.status_code == 200
    assert body['valid'] is True
    assert len(body['digest']) == 64
    assert 'lot.capacity = 600' in body['scenario']


def test_validate_scenario_plain_text(client):
    response = client.post('/api/scenarios/validate', data="population.n_agents = 40\n",
                           content_type='text/plain')
    assert response.status_code == 200
    assert 'population.n_agents = 40' in response.get_json()['scenario']


def test_invalid_scenario_is_400_with_location(client):
    text = "lot.capacity = 600\nadoption.awareness_threshold = 150\n"
    response = client.post('/api/scenarios/validate', json={'scenario': text})
    body = response.get_json()
    assert response.status_code == 400
    assert body['key'] == 'adoption.awareness_threshold'
    assert body['line'] == 2
    assert '0-100' in body['error']


def test_run_sweep(client):
    response = client.post('/api/runs', json={
        'overrides': SMALL,
        'sweep': {'key': 'adoption.ad_rate', 'values': [1.0, 3.0]},
    })
    assert response.status_code == 200
    body = response.get_json()
    assert body['sweep_key'] == 'adoption.ad_rate'
    assert [arm['sweep_value'] for arm in body['arms']] == ['1.0', '3.0']
    for arm in body['arms']:
        assert arm['replications'] == 2
        assert len(arm['final_counts']) == 2
        assert len(arm['aggregate']) == 20
        assert arm['aggregate'][0]['day'] == 0
        assert 'ev_count_mean' in arm['aggregate'][0]


def test_run_is_deterministic(client):
    payload = {'overrides': SMALL}
    first = client.post('/api/runs', json=payload).get_json()
    second = client.post('/api/runs', json=payload).get_json()
    assert first == second
    assert first['arms'][0]['sweep_value'] is None


def test_replications_are_capped(client, monkeypatch):
    monkeypatch.setattr(api, 'MAX_API_REPLICATIONS', 3)
    overrides = dict(SMALL, **{'run.replications': 10, 'run.horizon_days': 5})
    body = client.post('/api/runs', json={'overrides': overrides}).get_json()
    assert body['arms'][0]['replications'] == 3


def test_run_errors(client):
    response = client.post('/api/runs', json={'overrides': {'lot.colour': 'red'}})
    assert response.status_code == 400
    assert response.get_json()['key'] == 'lot.colour'
    response = client.post('/api/runs', json={'overrides': SMALL, 'sweep': {'key': 'adoption.ad_rate'}})
    assert response.status_code == 400
    response = client.post('/api/runs', json={'preset': 'exp9'})
    assert response.status_code == 400
    assert response.get_json()['key'] == 'preset'
    assert client.post('/api/runs', json=[1, 2]).status_code == 400


def test_bass_validation(client):
    response = client.get('/api/validation/bass?replications=2&horizon_days=30')
    assert response.status_code == 200
    body = response.get_json()
    assert body['p'] == pytest.approx(0.011)
    assert body['n_total'] == 500
    assert body['replications'] == 2
    assert body['tolerance'] == pytest.approx(25.0)
    assert body['passed'] is True
    assert len(body['trajectory']) == 30
    assert client.get('/api/validation/bass?replications=0').status_code == 400


def test_sweep_key_must_be_text(client):
    response = client.post('/api/runs', json={'overrides': SMALL,
                                              'sweep': {'key': ['adoption.ad_rate'], 'values': [1.0]}})
    assert response.status_code == 400
    assert response.get_json()['key'] == 'sweep'


def test_bass_peak_time(client):
    body = client.get('/api/validation/bass?replications=1&horizon_days=5').get_json()
    # ln(q / p) / (p + q) with p = 0.011, q = 1.5
    assert body['peak_time_years'] == pytest.approx(3.2529, abs=1e-3)


def test_stored_series_needs_a_database(client, monkeypatch):
    monkeypatch.setattr(api, 'DATABASE_URL', None)
    assert client.get('/api/series').status_code == 404


def test_runs_are_stored_and_served(client, monkeypatch, tmp_path):
    monkeypatch.setattr(api, 'DATABASE_URL', f"sqlite:///{tmp_path / 'runs.db'}")
    assert client.get('/api/series').status_code == 404

    body = client.post('/api/runs', json={'overrides': SMALL}).get_json()
    digest = body['arms'][0]['digest']

    stored = client.get(f'/api/series?digest={digest}').get_json()
    assert stored['rows'] == 2 * 20
    assert {row['digest'] for row in stored['series']} == {digest}
    one = client.get(f'/api/series?digest={digest}&replication=1').get_json()
    assert one['rows'] == 20
    assert [row['day'] for row in one['series']] == list(range(20))
    assert client.get('/api/series?replication=x').status_code == 400
    assert client.get('/api/series?digest=unknown').get_json()['rows'] == 0
