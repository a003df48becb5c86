"""Database service and the common randomness dealer."""

from __future__ import annotations

import logging
from pathlib import Path

from spirkit import core, feature, info, net, schemes, storage, variant_managers
from spirkit.core import CommonRandomness, MessageStore
from spirkit.feature import RunConfig, UsageError
from spirkit.variant_managers import VariantManager

logger = logging.getLogger(__name__)


class ServeFeature(feature.Feature):
    """Serves one database over TCP."""

    def __init__(self, node: net.DatabaseNode, host: str, port: int) -> None:
        self.node = node
        self.host = host
        self.port = port
        self.server: net.DatabaseServer | None = None

    @classmethod
    def from_files(
        cls,
        node_index: int,
        store_path: Path,
        randomness_path: Path,
        variant: VariantManager,
        host: str,
        port: int,
    ) -> ServeFeature:
        """Load a database from its store and randomness files.

        Raises:
            storage.StoreFormatError: Files are invalid or disagree on the field
        """

        store = storage.read_store(store_path)
        field_prime, blocks = storage.read_randomness(randomness_path)
        if field_prime != store.field:
            raise storage.StoreFormatError(
                f"Randomness is over F_{field_prime.p}, store over F_{store.field.p}"
            )
        node = net.DatabaseNode(node_index, store, variant, blocks)
        logger.info(
            "Database %d loaded %d messages and %d sessions",
            node_index,
            store.k,
            len(blocks),
        )
        return cls(node, host, port)

    def serve(self) -> None:
        self.server = net.DatabaseServer((self.host, self.port), self.node)
        host, port = self.server.endpoint
        logger.info("Database %d listening on %s:%d", self.node.index, host, port)
        self.server.serve_forever()

    def cleanup(self) -> None:
        if self.server is not None:
            self.server.server_close()
            logger.info(
                "Database %d served %s", self.node.index, self.node.ledger.to_dict()
            )


class ServeCliParser(feature.FeatureCliParser):
    """Parse CLI arguments for ServeFeature."""

    def __init__(self, feature: ServeFeature) -> None:
        self.feature = feature

    @staticmethod
    def build_feature(run_config: RunConfig) -> ServeFeature:
        for name in ("port", "node_index", "store", "randomness"):
            if run_config.option(name) is None:
                raise UsageError(f"serve needs --{name.replace('_', '-')}")
        variant = variant_managers.build_variant(
            run_config.option("variant"), run_config.option("custom_variant_dir_path")
        )
        return ServeFeature.from_files(
            run_config.option("node_index"),
            run_config.option("store"),
            run_config.option("randomness"),
            variant,
            run_config.option("host"),
            run_config.option("port"),
        )

    def parse(self, run_config: RunConfig) -> int:
        self.feature.serve()
        return info.EXIT_OK


class DealFeature(feature.Feature):
    """Writes the files databases start from."""

    def deal(
        self,
        params_path: Path,
        randomness_path: Path,
        sessions: int,
        seed: int,
        store_path: Path | None = None,
    ) -> dict[int, CommonRandomness]:
        """Draw common randomness for session ids 1..sessions, one symbol per
        round of the plan in the parameter file, and optionally a random store.

        Args:
            params_path (Path): Parameter file
            randomness_path (Path): Randomness file to write
            sessions (int): Number of sessions
            seed (int): Seed
            store_path (Path | None): Store file to write

        Returns:
            dict[int, CommonRandomness]: Blocks keyed by session id
        """

        params, plan_kind = storage.read_params(params_path)
        plan = schemes.make_plan(plan_kind, params)
        rng = core.make_rng(seed)

        if store_path is not None:
            storage.write_store(store_path, MessageStore.random(params, rng))
            logger.info("Wrote a random store to %s", store_path)

        blocks = {
            session_id: CommonRandomness.random(plan.randomness, params.field, rng)
            for session_id in range(1, sessions + 1)
        }
        storage.write_randomness(randomness_path, params.field, blocks)
        logger.info(
            "Dealt %d sessions of %d shared symbols to %s",
            sessions,
            plan.randomness,
            randomness_path,
        )
        return blocks

    def cleanup(self) -> None:
        pass


class DealCliParser(feature.FeatureCliParser):
    """Parse CLI arguments for DealFeature."""

    def __init__(self, feature: DealFeature) -> None:
        self.feature = feature

    def parse(self, run_config: RunConfig) -> int:
        params_path = run_config.option("params")
        if params_path is None or run_config.output is None:
            raise UsageError("deal needs --params and --output")
        self.feature.deal(
            params_path,
            run_config.output,
            run_config.option("sessions", 1),
            run_config.seed,
            run_config.option("store"),
        )
        return info.EXIT_OK
