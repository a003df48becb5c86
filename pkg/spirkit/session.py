"""Retrieval sessions from the command line: one in-process run, simulated
batches, and a client for networked databases.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Sequence

from spirkit import core, feature, info, net, reports, schemes, storage, variant_managers
from spirkit.core import CommonRandomness, MessageStore, ProtocolParams
from spirkit.feature import RunConfig, UsageError
from spirkit.renderer import ReportRenderer
from spirkit.variant_managers import VariantManager

logger = logging.getLogger(__name__)


def parse_endpoints(text: str) -> list[net.Endpoint]:
    """Parse "host:port,host:port" into endpoints.

    Raises:
        UsageError: Malformed endpoint
    """

    endpoints = []
    for item in text.split(","):
        host, _, port = item.strip().rpartition(":")
        if not host or not port.isdigit():
            raise UsageError(f'Endpoint "{item}" is not host:port')
        endpoints.append((host, int(port)))
    return endpoints


class SessionFeature(feature.Feature):
    """Handles retrieval sessions."""

    def __init__(self, variant: VariantManager, timeout: float) -> None:
        """Handles retrieval sessions.

        Args:
            variant (VariantManager): Scheme variant
            timeout (float): Seconds to wait for a round over the network
        """

        self.variant = variant
        self.timeout = timeout

    @classmethod
    def from_run_config(cls, run_config: RunConfig) -> SessionFeature:
        variant = variant_managers.build_variant(
            run_config.option("variant"), run_config.option("custom_variant_dir_path")
        )
        return cls(variant, run_config.option("timeout"))

    def run(
        self,
        params: ProtocolParams,
        plan_kind: str | None,
        index: int,
        seed: int,
        store_path: Path | None = None,
    ) -> tuple[schemes.Transcript, bool]:
        """Run one session in-process.

        Args:
            params (ProtocolParams): Parameters
            plan_kind (str | None): Plan kind, chosen from the lengths by default
            index (int): Desired message index
            seed (int): Seed for the store, common randomness and coins
            store_path (Path | None): Store file, random messages if None

        Returns:
            tuple[schemes.Transcript, bool]: Transcript and whether it decoded
            the desired message
        """

        rng = core.make_rng(seed)
        if store_path is not None:
            store = storage.read_store(store_path)
            if not store.matches(params):
                raise UsageError(f"Store {store_path} does not match the parameters")
        else:
            store = MessageStore.random(params, rng)

        plan = schemes.make_plan(plan_kind or schemes.default_plan_kind(params), params)
        common = CommonRandomness.random(plan.randomness, params.field, rng)
        transcript = schemes.run_session(
            plan, schemes.RetrievalRequest(index), store, common, rng, self.variant
        )
        matches = transcript.decoded.tolist() == store.message(index).tolist()
        if not matches:
            logger.error("Decoded symbols differ from message %d", index)
        return transcript, matches

    def simulate(
        self,
        params: ProtocolParams,
        plan_kind: str | None,
        trials: int,
        seed: int,
        network: bool = False,
    ) -> net.SimulationBatch:
        return net.simulate(
            params,
            plan_kind or schemes.default_plan_kind(params),
            trials,
            seed,
            self.variant,
            network,
            self.timeout,
        )

    def retrieve(
        self,
        params: ProtocolParams,
        plan_kind: str,
        endpoints: Sequence[net.Endpoint],
        index: int,
        seed: int,
        session_id: int,
    ) -> net.SessionResult:
        """Retrieve a message from networked databases.

        Raises:
            UsageError: Not one endpoint per database
            net.SessionAbortedError: Session did not finish
        """

        if len(endpoints) != params.n:
            raise UsageError(
                f"Got {len(endpoints)} servers for N={params.n} databases"
            )
        plan = schemes.make_plan(plan_kind, params)
        client = net.Client(net.TcpTransport(endpoints, self.timeout), self.variant)
        return client.retrieve(plan, schemes.RetrievalRequest(index), seed, session_id)

    def cleanup(self) -> None:
        pass


class SessionCliParser(feature.FeatureCliParser):
    """Parse CLI arguments for SessionFeature."""

    def __init__(self, feature: SessionFeature, renderer: ReportRenderer) -> None:
        self.feature = feature
        self.renderer = renderer

    def emit(self, run_config: RunConfig, kind: str, result: dict, results: list):
        data = reports.envelope(run_config, kind, result)
        if run_config.output is not None:
            reports.write_report(run_config.output, data)
        if run_config.option("json"):
            print(reports.dumps(data), end="")
        else:
            print(self.renderer.render("session.txt.j2", {"results": results}), end="")

    def parse_run(self, run_config: RunConfig) -> int:
        params = run_config.require_params()
        transcript, matches = self.feature.run(
            params,
            run_config.option("plan"),
            run_config.option("index", 1),
            run_config.seed,
            run_config.option("store"),
        )
        self.emit(
            run_config,
            "run",
            transcript.to_dict(),
            [{"session_id": 1, "transcript": transcript, "meter": None}],
        )
        return info.EXIT_OK if matches else info.EXIT_AUDIT_FAILED

    def parse_simulate(self, run_config: RunConfig) -> None:
        params = run_config.require_params()
        batch = self.feature.simulate(
            params,
            run_config.option("plan"),
            run_config.option("trials", 1),
            run_config.seed,
            run_config.option("network", False),
        )
        self.emit(run_config, "simulate", batch.to_dict(), list(batch.results))

    def parse_client(self, run_config: RunConfig) -> None:
        params_path = run_config.option("params")
        servers = run_config.option("servers")
        index = run_config.option("index")
        if params_path is None or servers is None or index is None:
            raise UsageError("client needs --servers, --k and --params")

        params, plan_kind = storage.read_params(params_path)
        result = self.feature.retrieve(
            params,
            plan_kind,
            parse_endpoints(servers),
            index,
            run_config.seed,
            run_config.option("session", 1),
        )
        self.emit(run_config, "client", result.to_dict(), [result])

    def parse(self, run_config: RunConfig) -> int:
        match run_config.subcommand:
            case "run":
                return self.parse_run(run_config)
            case "simulate":
                self.parse_simulate(run_config)
            case "client":
                self.parse_client(run_config)
            case _:
                raise UsageError(f'Unknown session command "{run_config.subcommand}"')
        return info.EXIT_OK
