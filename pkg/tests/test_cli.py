import json
import os
import socket
import subprocess
import sys
import time
from argparse import Namespace
from pathlib import Path
from unittest import mock

import pytest

from spirkit import __main__ as cli
from spirkit import (
    audit,
    feature,
    info,
    net,
    reports,
    schemes,
    service,
    session,
    storage,
    variant_managers,
    wire,
)
from spirkit.core import ProtocolParams
from spirkit.schemes import RetrievalRequest
from spirkit.wire import ErrorCode, FrameType

REPO_ROOT = Path(__file__).resolve().parents[1]


@pytest.fixture
def cli_env(monkeypatch, tmp_path):
    """Keep main() away from the user's directories."""

    monkeypatch.setenv(info.CONFIG_ENVVAR, str(info.DEFAULT_CONFIG_PATH))
    monkeypatch.delenv(info.BUDGET_ENVVAR, raising=False)
    monkeypatch.setattr(info, "DATA_DIR", tmp_path / "data")
    monkeypatch.setattr(info, "LOGGING_DIR", tmp_path / "log")
    monkeypatch.setattr(
        info, "LOGGING_CONFIG", {"version": 1, "disable_existing_loggers": False}
    )
    return tmp_path


class TestRunConfigFromCli:
    def test_length_defaults_to_n_minus_one(self):
        cli_args = cli.get_cli_args(["capacity", "--n", "4", "--k", "2"])

        run_config = feature.run_config_from_cli(cli_args, {})

        assert run_config.params == ProtocolParams.uniform(4, 2, 3)

    def test_both_length_flags_raise_usage_error(self):
        cli_args = cli.get_cli_args(
            ["capacity", "--n", "2", "--k", "2", "--length", "1", "--lengths", "1", "2"]
        )

        with pytest.raises(feature.UsageError):
            feature.run_config_from_cli(cli_args, {})

    def test_lengths_must_match_message_count(self):
        cli_args = cli.get_cli_args(["capacity", "--n", "2", "--k", "3", "--lengths", "1"])

        with pytest.raises(feature.UsageError):
            feature.run_config_from_cli(cli_args, {})

    def test_config_fills_defaults_and_cli_wins(self):
        cli_args = cli.get_cli_args(
            ["audit", "--n", "2", "--k", "2", "--sabotage", "no-mask", "--workers", "3"]
        )
        spirkit_config = {
            "field": {"prime": 3},
            "audit": {"budget": 99, "workers": 2, "chunk_size": 10},
        }

        run_config = feature.run_config_from_cli(cli_args, spirkit_config)

        assert run_config.params.p == 3
        assert run_config.budget == 99
        assert run_config.option("workers") == 3
        assert run_config.option("chunk_size") == 10
        assert run_config.option("variant") == "no_mask"

    def test_negative_trials_raise_usage_error(self):
        cli_args = cli.get_cli_args(
            ["simulate", "--n", "2", "--k-count", "2", "--trials", "-1"]
        )

        with pytest.raises(feature.UsageError):
            feature.run_config_from_cli(cli_args, {})

    @pytest.mark.parametrize("text,expected", [[None, None], ["inf", None], ["1/3", "1/3"]])
    def test_parse_rho(self, text, expected):
        result = feature.parse_rho(text)

        assert (None if result is None else f"{result.numerator}/{result.denominator}") == expected

    def test_parse_rho_rejects_text(self):
        with pytest.raises(feature.UsageError):
            feature.parse_rho("lots")


class TestAuditCliParser:
    @pytest.mark.parametrize("passed,expected", [[True, 0], [False, 1]])
    def test_exit_status_follows_verdict(self, passed, expected, capsys):
        feature_obj = mock.create_autospec(audit.AuditFeature)
        feature_obj.audit.return_value.passed = passed
        feature_obj.audit.return_value.to_dict.return_value = {"passed": passed}
        cli_args = cli.get_cli_args(
            ["audit", "--n", "2", "--k", "2", "--plan", "base", "--json"]
        )
        run_config = feature.run_config_from_cli(cli_args, {})

        result = audit.AuditCliParser(feature_obj, mock.Mock()).parse(run_config)

        feature_obj.audit.assert_called_once_with(run_config.params, "base")
        assert result == expected
        assert json.loads(capsys.readouterr().out)["result"]["capacity"] == "1/2"


class TestSessionCliParser:
    def test_run_passes_options_to_feature(self, capsys):
        feature_obj = mock.create_autospec(session.SessionFeature)
        cli_args = cli.get_cli_args(
            ["run", "--n", "2", "--k", "2", "--index", "2", "--seed", "4", "--json"]
        )
        run_config = feature.run_config_from_cli(cli_args, {})
        transcript = mock.Mock()
        transcript.to_dict.return_value = {"decoded": [1]}
        feature_obj.run.return_value = (transcript, True)

        result = session.SessionCliParser(feature_obj, mock.Mock()).parse(run_config)

        feature_obj.run.assert_called_once_with(run_config.params, None, 2, 4, None)
        assert result == info.EXIT_OK
        assert json.loads(capsys.readouterr().out)["result"] == {"decoded": [1]}

    def test_run_that_decodes_another_message_exits_one(self, capsys):
        feature_obj = mock.create_autospec(session.SessionFeature)
        run_config = feature.run_config_from_cli(
            cli.get_cli_args(["run", "--n", "2", "--k", "2", "--json"]), {}
        )
        transcript = mock.Mock()
        transcript.to_dict.return_value = {"decoded": [0]}
        feature_obj.run.return_value = (transcript, False)

        result = session.SessionCliParser(feature_obj, mock.Mock()).parse(run_config)

        assert result == info.EXIT_AUDIT_FAILED
        assert json.loads(capsys.readouterr().out)["result"] == {"decoded": [0]}

    def test_client_without_servers_raises_usage_error(self):
        feature_obj = mock.create_autospec(session.SessionFeature)
        run_config = feature.run_config_from_cli(cli.get_cli_args(["client"]), {})

        with pytest.raises(feature.UsageError):
            session.SessionCliParser(feature_obj, mock.Mock()).parse(run_config)

    @pytest.mark.parametrize("text", ["localhost", "host:port", ":80"])
    def test_bad_endpoint_raises_usage_error(self, text):
        with pytest.raises(feature.UsageError):
            session.parse_endpoints(text)

    def test_endpoints_keep_order(self):
        assert session.parse_endpoints("a:1, b:2") == [("a", 1), ("b", 2)]


class TestMain:
    def test_capacity_prints_exact_capacity(self, cli_env, capsys):
        result = cli.main(["capacity", "--n", "2", "--k", "5", "--rho", "1"])

        assert result == info.EXIT_OK
        assert "1/2" in capsys.readouterr().out

    def test_capacity_json_is_canonical(self, cli_env, capsys):
        cli.main(["capacity", "--n", "3", "--k", "2", "--length", "3", "--json"])

        out = capsys.readouterr().out
        data = json.loads(out)
        assert data["kind"] == "capacity"
        assert data["result"]["finite"]["capacity"] == "3/5"
        assert out == json.dumps(data, sort_keys=True, indent=2) + "\n"

    def test_audit_of_honest_scheme_exits_zero(self, cli_env, capsys):
        result = cli.main(["audit", "--n", "2", "--k", "2", "--length", "1"])

        assert result == info.EXIT_OK
        assert "Result: PASS" in capsys.readouterr().out

    @pytest.mark.parametrize(
        "variant,extra", [["no-mask", []], ["deterministic-coins", []], ["wrong-subtraction", ["--p", "3"]]]
    )
    def test_audit_of_sabotage_exits_one(self, cli_env, variant, extra):
        result = cli.main(
            ["audit", "--n", "2", "--k", "2", "--length", "1", "--sabotage", variant, *extra]
        )

        assert result == info.EXIT_AUDIT_FAILED

    def test_audit_over_budget_exits_two(self, cli_env, capsys):
        result = cli.main(["audit", "--n", "2", "--k", "2", "--budget", "4"])

        assert result == info.EXIT_USAGE
        assert "32" in capsys.readouterr().err

    @pytest.mark.parametrize("command", ["audit", "run"])
    def test_infeasible_parameters_print_capacity_report(self, cli_env, capsys, command):
        result = cli.main([command, "--n", "1", "--k", "2"])

        assert result == info.EXIT_USAGE
        assert "infeasible_N1" in capsys.readouterr().out

    def test_run_writes_report_file(self, cli_env):
        output = cli_env / "run.json"

        result = cli.main(
            ["run", "--n", "3", "--k", "2", "--length", "3", "--index", "2", "--output", str(output)]
        )

        data = json.loads(output.read_text())
        assert result == info.EXIT_OK
        assert data["kind"] == "run"
        assert data["result"]["ledger"]["per_database"] == [2, 2, 1]

    def test_simulate_runs_trials(self, cli_env, capsys):
        result = cli.main(
            ["simulate", "--n", "3", "--k-count", "2", "--trials", "2", "--json"]
        )

        data = json.loads(capsys.readouterr().out)
        assert result == info.EXIT_OK
        assert data["result"]["trials"] == 2

    def test_deal_then_run_from_store(self, cli_env, capsys):
        params_path = cli_env / "params.toml"
        storage.write_params(params_path, ProtocolParams.uniform(2, 3, 2), "base")
        store_path = cli_env / "db.store"
        randomness_path = cli_env / "db.rand"

        dealt = cli.main(
            [
                "deal",
                "--params",
                str(params_path),
                "--sessions",
                "3",
                "--output",
                str(randomness_path),
                "--store",
                str(store_path),
            ]
        )
        ran = cli.main(
            ["run", "--n", "2", "--k", "3", "--length", "2", "--store", str(store_path), "--index", "3", "--json"]
        )

        assert dealt == ran == info.EXIT_OK
        assert len(storage.read_randomness(randomness_path)[1]) == 3
        decoded = json.loads(capsys.readouterr().out)["result"]["decoded"]
        assert decoded == storage.read_store(store_path).message(3).tolist()

    def test_run_with_wrong_subtraction_exits_one(self, cli_env, store_factory):
        store_path = cli_env / "db.store"
        storage.write_store(store_path, store_factory(3, [[1, 2], [2, 1]]))

        result = cli.main(
            [
                "run",
                "--n",
                "2",
                "--k",
                "2",
                "--length",
                "2",
                "--p",
                "3",
                "--store",
                str(store_path),
                "--index",
                "1",
                "--variant",
                "wrong-subtraction",
            ]
        )

        assert result == info.EXIT_AUDIT_FAILED

    @pytest.mark.parametrize("command", ["client", "deal"])
    def test_infeasible_params_file_prints_capacity_report(
        self, cli_env, capsys, command
    ):
        params_path = cli_env / "params.toml"
        storage.write_params(params_path, ProtocolParams.uniform(1, 2, 1), "base")
        randomness_path = cli_env / "db.rand"
        args = {
            "client": ["--servers", "127.0.0.1:1", "--k", "1"],
            "deal": ["--output", str(randomness_path)],
        }[command]

        result = cli.main([command, "--params", str(params_path), *args])

        assert result == info.EXIT_USAGE
        assert "infeasible_N1" in capsys.readouterr().out
        assert not randomness_path.exists()

    def test_params_file_with_text_lengths_exits_two(self, cli_env, capsys):
        params_path = cli_env / "params.toml"
        params_path.write_text('n = 2\nk = 2\nlengths = "ab"\n')

        result = cli.main(
            ["deal", "--params", str(params_path), "--output", str(cli_env / "db.rand")]
        )

        assert result == info.EXIT_USAGE
        assert "Invalid parameters" in capsys.readouterr().err

    def test_serve_without_port_exits_two(self, cli_env):
        assert cli.main(["serve", "--node-index", "1"]) == info.EXIT_USAGE

    def test_unknown_variant_exits_two(self, cli_env):
        result = cli.main(
            ["audit", "--n", "2", "--k", "2", "--sabotage", "mystery"]
        )

        assert result == info.EXIT_USAGE

    def test_no_command_exits_two(self, cli_env):
        assert cli.main([]) == info.EXIT_USAGE


def test_client_retrieves_from_served_databases(cli_env, capsys):
    params = ProtocolParams.uniform(3, 2, 2, 3)
    params_path = cli_env / "params.toml"
    storage.write_params(params_path, params, "base")
    store_path = cli_env / "db.store"
    randomness_path = cli_env / "db.rand"
    cli.main(
        ["deal", "--params", str(params_path), "--output", str(randomness_path), "--store", str(store_path)]
    )
    _, blocks = storage.read_randomness(randomness_path)
    store = storage.read_store(store_path)
    nodes = [net.DatabaseNode(n, store, sessions=blocks) for n in (1, 2, 3)]

    with net.serve_in_background(nodes) as endpoints:
        servers = ",".join(f"{host}:{port}" for host, port in endpoints)
        result = cli.main(
            ["client", "--servers", servers, "--k", "2", "--params", str(params_path), "--json"]
        )

    assert result == info.EXIT_OK
    data = json.loads(capsys.readouterr().out)
    assert data["result"]["transcript"]["decoded"] == store.message(2).tolist()


@pytest.fixture
def dealt(cli_env):
    """Parameter, store and randomness files for three databases over F_3."""

    params = ProtocolParams.uniform(3, 2, 2, 3)
    params_path = cli_env / "params.toml"
    storage.write_params(params_path, params, "base")
    store_path = cli_env / "db.store"
    randomness_path = cli_env / "db.rand"
    cli.main(
        [
            "deal",
            "--params",
            str(params_path),
            "--sessions",
            "2",
            "--output",
            str(randomness_path),
            "--store",
            str(store_path),
        ]
    )
    return params, params_path, store_path, randomness_path


class TestServedNode:
    def test_setup_over_tcp_is_refused(self, dealt):
        _, _, store_path, randomness_path = dealt
        serve_feature = service.ServeFeature.from_files(
            1, store_path, randomness_path, variant_managers.honest(), "127.0.0.1", 0
        )
        node = serve_feature.node
        before = node.sessions[1].symbols.tolist()
        frame = wire.setup_frame(1, [0] * len(before), node.bits)

        with net.serve_in_background([node]) as endpoints:
            data = net.TcpTransport(endpoints).exchange(1, frame.encode())

        response = wire.decode_frame(data)
        assert response.frame_type == FrameType.ERROR
        assert wire.parse_error(response)[0] == ErrorCode.REFUSED
        assert node.sessions[1].symbols.tolist() == before

    def test_setup_of_new_session_is_refused(self, dealt):
        _, _, store_path, randomness_path = dealt
        serve_feature = service.ServeFeature.from_files(
            1, store_path, randomness_path, variant_managers.honest(), "127.0.0.1", 0
        )
        node = serve_feature.node
        frame = wire.setup_frame(9, [1, 2], node.bits)

        response = wire.decode_frame(node.handle_frame(frame.encode()))

        assert wire.parse_error(response)[0] == ErrorCode.REFUSED
        assert 9 not in node.sessions


def free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


def wait_until_listening(process: subprocess.Popen, port: int, timeout: float = 20.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        if process.poll() is not None:
            pytest.fail(f"serve on port {port} exited with {process.returncode}")
        try:
            with socket.create_connection(("127.0.0.1", port), timeout=0.5):
                return
        except OSError:
            time.sleep(0.1)
    pytest.fail(f"serve on port {port} did not start")


def test_client_retrieves_from_database_processes(dealt, capsys):
    params, params_path, store_path, randomness_path = dealt
    home = params_path.parent
    env = {
        **os.environ,
        "PYTHONPATH": os.pathsep.join(
            filter(None, [str(REPO_ROOT), os.environ.get("PYTHONPATH")])
        ),
        info.CONFIG_ENVVAR: str(info.DEFAULT_CONFIG_PATH),
        "XDG_CONFIG_HOME": str(home / "config"),
        "XDG_DATA_HOME": str(home / "data"),
        "XDG_CACHE_HOME": str(home / "cache"),
    }
    env.pop(info.BUDGET_ENVVAR, None)
    ports = [free_port() for _ in range(params.n)]
    processes = [
        subprocess.Popen(
            [
                sys.executable,
                "-m",
                "spirkit",
                "serve",
                "--host",
                "127.0.0.1",
                "--port",
                str(port),
                "--node-index",
                str(node_index),
                "--store",
                str(store_path),
                "--randomness",
                str(randomness_path),
            ],
            env=env,
            stdout=subprocess.DEVNULL,
            stderr=subprocess.DEVNULL,
        )
        for node_index, port in enumerate(ports, start=1)
    ]
    try:
        for process, port in zip(processes, ports):
            wait_until_listening(process, port)
        servers = ",".join(f"127.0.0.1:{port}" for port in ports)
        result = cli.main(
            [
                "client",
                "--servers",
                servers,
                "--k",
                "2",
                "--params",
                str(params_path),
                "--seed",
                "5",
                "--json",
            ]
        )
        setup = net.TcpTransport([("127.0.0.1", ports[0])]).exchange(
            1, wire.setup_frame(1, [0], 2).encode()
        )
    finally:
        for process in processes:
            process.terminate()
        for process in processes:
            process.wait(timeout=10)

    _, blocks = storage.read_randomness(randomness_path)
    store = storage.read_store(store_path)
    plan = schemes.make_plan("base", params)
    nodes = [net.DatabaseNode(n, store, sessions=blocks) for n in (1, 2, 3)]
    in_process = net.Client(net.InProcessTransport(nodes)).retrieve(
        plan, RetrievalRequest(2), 5, 1
    )
    data = json.loads(capsys.readouterr().out)["result"]
    assert result == info.EXIT_OK
    assert data["transcript"] == json.loads(reports.dumps(in_process.transcript.to_dict()))
    assert data["transcript"]["decoded"] == store.message(2).tolist()
    assert data["meter"]["download"] == plan.download
    assert sum(data["transcript"]["ledger"]["per_database"]) == plan.download
    assert wire.parse_error(wire.decode_frame(setup))[0] == ErrorCode.REFUSED


def test_namespace_without_command_has_no_params():
    run_config = feature.run_config_from_cli(Namespace(subparser_name=None), {})

    assert run_config.params is None
