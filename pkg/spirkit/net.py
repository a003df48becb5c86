"""Databases, the user client and the transports between them.

A DatabaseNode only ever sees frames addressed to it. Nodes hold no
reference to each other and share nothing mutable. The client talks to
nodes through a Transport, either in-process or over TCP, and always
encodes real frames so metering is the same on both.
"""

from __future__ import annotations

import abc
import concurrent.futures
import contextlib
import logging
import socket
import socketserver
import threading
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from spirkit import core, exceptions, schemes, wire
from spirkit.core import CommonRandomness, MessageStore, ProtocolParams, Seed
from spirkit.schemes import Answer, Query, SessionPlan, Transcript
from spirkit.variant_managers import VariantManager, honest
from spirkit.wire import ErrorCode, FrameError, FrameType, WireFrame

logger = logging.getLogger(__name__)

DEFAULT_TIMEOUT = 5.0

Endpoint = tuple[str, int]


class SessionAbortedError(exceptions.AppError):
    """A session could not finish. Nothing is decoded."""


class NodeLedger:
    """What one database received and served."""

    def __init__(self) -> None:
        self.answer_symbols = 0
        self.answer_bytes = 0
        self.query_symbols = 0
        self.query_bytes = 0
        self._lock = threading.Lock()

    def record(self, query_symbols: int, query_bytes: int, answer_bytes: int) -> None:
        with self._lock:
            self.answer_symbols += 1
            self.answer_bytes += answer_bytes
            self.query_symbols += query_symbols
            self.query_bytes += query_bytes

    def to_dict(self) -> dict:
        with self._lock:
            return {
                "answer_bytes": self.answer_bytes,
                "answer_symbols": self.answer_symbols,
                "query_bytes": self.query_bytes,
                "query_symbols": self.query_symbols,
            }


class DatabaseNode:
    """One of N replicated databases. It never learns the desired index."""

    def __init__(
        self,
        index: int,
        store: MessageStore,
        variant: VariantManager | None = None,
        sessions: dict[int, CommonRandomness] | None = None,
        dealer_access: bool = False,
    ) -> None:
        """One of N replicated databases.

        Args:
            index (int): Database index n, 1-based
            store (MessageStore): Messages
            variant (VariantManager | None): Scheme variant, honest by default
            sessions (dict[int, CommonRandomness] | None): Common randomness
            loaded out of band, keyed by session id
            dealer_access (bool): Accept SETUP frames. Only a node reachable
            by the dealer alone may set this. A loaded session is never
            replaced either way.
        """

        self.index = index
        self.store = store
        self.variant = variant or honest()
        self.sessions: dict[int, CommonRandomness] = dict(sessions or {})
        self.dealer_access = dealer_access
        self.ledger = NodeLedger()
        self._lock = threading.Lock()

    @property
    def bits(self) -> int:
        return self.store.field.symbol_bits

    def load_randomness(self, session_id: int, common: CommonRandomness) -> None:
        """Load common randomness for a new session.

        Raises:
            FrameError: The session already has common randomness
        """

        with self._lock:
            if session_id in self.sessions:
                raise FrameError(
                    ErrorCode.REFUSED, f"Session {session_id} is already set up"
                )
            self.sessions[session_id] = common
        logger.debug(
            "Database %d loaded %d shared symbols for session %d",
            self.index,
            len(common),
            session_id,
        )

    def handle_frame(self, data: bytes) -> bytes:
        """Answer one raw frame. Never raises on bad input: every rejected
        frame is answered with an ERROR frame.

        Args:
            data (bytes): Raw frame

        Returns:
            bytes: Raw response frame
        """

        try:
            frame = wire.decode_frame(data)
        except FrameError as err:
            logger.debug("Database %d rejected frame: %s", self.index, err)
            return wire.error_frame(0, 0, err.code, str(err)).encode()

        try:
            return self._dispatch(frame).encode()
        except FrameError as err:
            logger.debug("Database %d rejected frame: %s", self.index, err)
            response = wire.error_frame(frame.session_id, frame.round, err.code, str(err))
            return response.encode()

    def _dispatch(self, frame: WireFrame) -> WireFrame:
        match frame.frame_type:
            case FrameType.SETUP:
                return self._setup(frame)
            case FrameType.QUERY:
                return self._answer(frame)
            case _:
                raise FrameError(
                    ErrorCode.UNKNOWN_TYPE,
                    f"Databases do not accept {frame.frame_type.name} frames",
                )

    def _setup(self, frame: WireFrame) -> WireFrame:
        if not self.dealer_access:
            raise FrameError(
                ErrorCode.REFUSED, f"Database {self.index} takes no SETUP frames"
            )
        symbols = wire.parse_setup(frame, self.bits)
        try:
            common = CommonRandomness(self.store.field.vector(symbols))
        except core.FieldError as err:
            raise FrameError(ErrorCode.MALFORMED, str(err)) from err
        self.load_randomness(frame.session_id, common)
        return WireFrame(FrameType.SETUP, frame.session_id, 0)

    def _answer(self, frame: WireFrame) -> WireFrame:
        with self._lock:
            common = self.sessions.get(frame.session_id)
        if common is None:
            raise FrameError(
                ErrorCode.NO_SETUP, f"Session {frame.session_id} has no common randomness"
            )

        offset, width, coeffs = wire.parse_query(frame, self.store.k, self.bits)
        if offset >= max(self.store.lengths):
            raise FrameError(ErrorCode.MALFORMED, f"Window at {offset} is past the store")
        try:
            coeffs = self.store.field.vector(coeffs)
        except core.FieldError as err:
            raise FrameError(ErrorCode.MALFORMED, str(err)) from err

        mask_index = self.variant.mask_index(frame.round)
        if not 0 <= mask_index < len(common):
            raise FrameError(
                ErrorCode.BAD_ROUND,
                f"Round {frame.round} has no shared symbol in session {frame.session_id}",
            )

        answer = schemes.base_answer(
            Query(frame.round, self.index, offset, coeffs),
            self.store,
            common.symbol(mask_index),
            self.variant,
        )
        response = wire.answer_frame(frame.session_id, frame.round, answer.value, self.bits)
        self.ledger.record(coeffs.size, len(frame.payload), len(response.payload))
        return response


class Transport(abc.ABC):
    """Delivers one frame to a database and returns its response."""

    @abc.abstractmethod
    def exchange(self, db_index: int, data: bytes) -> bytes:
        """Send a frame to database db_index and wait for the response."""


class InProcessTransport(Transport):
    def __init__(self, nodes: Sequence[DatabaseNode]) -> None:
        self.nodes = {node.index: node for node in nodes}

    def exchange(self, db_index: int, data: bytes) -> bytes:
        try:
            node = self.nodes[db_index]
        except KeyError as err:
            raise ConnectionError(f"No database {db_index}") from err
        return node.handle_frame(data)


def recv_exactly(sock: socket.socket, size: int) -> bytes:
    """Read size bytes, or fewer if the peer closes the connection."""

    data = []
    got = 0
    while got < size:
        chunk = sock.recv(size - got)
        if not chunk:
            break
        got += len(chunk)
        data.append(chunk)
    return b"".join(data)


class TcpTransport(Transport):
    """One connection per frame, so concurrent frames never share a socket."""

    def __init__(self, endpoints: Sequence[Endpoint], timeout: float = DEFAULT_TIMEOUT):
        self.endpoints = list(endpoints)
        self.timeout = timeout

    def exchange(self, db_index: int, data: bytes) -> bytes:
        if not 1 <= db_index <= len(self.endpoints):
            raise ConnectionError(f"No endpoint for database {db_index}")
        with socket.create_connection(
            self.endpoints[db_index - 1], timeout=self.timeout
        ) as sock:
            sock.sendall(data)
            return wire.read_frame(lambda size: recv_exactly(sock, size))


class FrameHandler(socketserver.BaseRequestHandler):
    def handle(self) -> None:
        node: DatabaseNode = self.server.node  # type: ignore[attr-defined]
        while True:
            try:
                data = wire.read_frame(lambda size: recv_exactly(self.request, size))
            except EOFError:
                return
            except FrameError as err:
                self.request.sendall(wire.error_frame(0, 0, err.code, str(err)).encode())
                return
            except OSError as err:
                logger.debug("Connection to database %d dropped: %s", node.index, err)
                return
            self.request.sendall(node.handle_frame(data))


class DatabaseServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, endpoint: Endpoint, node: DatabaseNode) -> None:
        super().__init__(endpoint, FrameHandler)
        self.node = node

    @property
    def endpoint(self) -> Endpoint:
        host, port = self.server_address[:2]
        return host, port


@contextlib.contextmanager
def serve_in_background(
    nodes: Sequence[DatabaseNode], host: str = "127.0.0.1"
) -> Iterator[list[Endpoint]]:
    """Run a TCP server per node on free ports until the context exits.

    Args:
        nodes (Sequence[DatabaseNode]): Databases
        host (str): Interface to bind

    Yields:
        list[Endpoint]: Endpoints in node order
    """

    servers = [DatabaseServer((host, 0), node) for node in nodes]
    threads = [
        threading.Thread(target=server.serve_forever, daemon=True) for server in servers
    ]
    for thread in threads:
        thread.start()
    try:
        yield [server.endpoint for server in servers]
    finally:
        for server in servers:
            server.shutdown()
            server.server_close()


class WireMeter:
    """Bytes and symbols that crossed the wire in one session."""

    def __init__(self, n: int) -> None:
        self.answer_symbols = [0] * n
        self.answer_bytes = 0
        self.query_symbols = 0
        self.query_bytes = 0
        self.overhead_bytes = 0
        self._lock = threading.Lock()

    def record_query(self, symbols: int, frame: WireFrame) -> None:
        with self._lock:
            self.query_symbols += symbols
            self.query_bytes += len(frame.payload)
            self.overhead_bytes += wire.HEADER_SIZE

    def record_answer(self, db_index: int, frame: WireFrame) -> None:
        with self._lock:
            self.answer_symbols[db_index - 1] += 1
            self.answer_bytes += len(frame.payload)
            self.overhead_bytes += wire.HEADER_SIZE

    @property
    def download(self) -> int:
        with self._lock:
            return sum(self.answer_symbols)

    def to_dict(self) -> dict:
        with self._lock:
            return {
                "answer_bytes": self.answer_bytes,
                "answer_symbols": list(self.answer_symbols),
                "download": sum(self.answer_symbols),
                "overhead_bytes": self.overhead_bytes,
                "query_bytes": self.query_bytes,
                "query_symbols": self.query_symbols,
            }


@dataclass(frozen=True, eq=False)
class SessionResult:
    session_id: int
    transcript: Transcript
    meter: WireMeter

    def to_dict(self) -> dict:
        return {
            "session_id": self.session_id,
            "transcript": self.transcript.to_dict(),
            "wire": self.meter.to_dict(),
        }


class Client:
    """The user: sends one query per database per round, waits for every
    answer of the round, then decodes.
    """

    def __init__(
        self,
        transport: Transport,
        variant: VariantManager | None = None,
        timeout: float = DEFAULT_TIMEOUT,
    ) -> None:
        self.transport = transport
        self.variant = variant or honest()
        self.timeout = timeout

    def _exchange(
        self,
        session_id: int,
        query: Query,
        width: int,
        bits: int,
        meter: WireMeter,
    ) -> Answer:
        frame = wire.query_frame(
            session_id,
            query.round,
            query.offset,
            width,
            query.coeffs.tolist(),
            bits,
        )
        meter.record_query(query.coeffs.size, frame)
        response = wire.decode_frame(self.transport.exchange(query.db_index, frame.encode()))

        if response.frame_type == FrameType.ERROR:
            code, message = wire.parse_error(response)
            raise SessionAbortedError(
                f"Database {query.db_index} refused round {query.round}: "
                f"{code!s} {message}"
            )
        if (
            response.frame_type != FrameType.ANSWER
            or response.session_id != session_id
            or response.round != query.round
        ):
            raise SessionAbortedError(
                f"Database {query.db_index} sent an unexpected frame"
            )

        meter.record_answer(query.db_index, response)
        return Answer(query.round, query.db_index, wire.parse_answer(response, bits))

    def retrieve(
        self,
        plan: SessionPlan,
        request: schemes.RetrievalRequest,
        seed: Seed,
        session_id: int = 1,
    ) -> SessionResult:
        """Run a session against the databases behind the transport.

        Args:
            plan (SessionPlan): Plan
            request (schemes.RetrievalRequest): Desired index
            seed (Seed): User's seed
            session_id (int): Session whose common randomness the databases use

        Raises:
            SessionAbortedError: A database is unreachable, slow or refuses

        Returns:
            SessionResult: Transcript and wire meter
        """

        params = plan.params
        bits = params.field.symbol_bits
        meter = WireMeter(params.n)

        with concurrent.futures.ThreadPoolExecutor(max_workers=params.n) as pool:

            def responder(round_index: int, queries: Sequence[Query]) -> list[Answer]:
                futures = [
                    pool.submit(
                        self._exchange,
                        session_id,
                        query,
                        query.coeffs.size // params.k,
                        bits,
                        meter,
                    )
                    for query in queries
                ]
                return [future.result(timeout=self.timeout) for future in futures]

            try:
                transcript = schemes.drive_session(
                    plan, request, seed, responder, self.variant
                )
            except (
                OSError,
                EOFError,
                concurrent.futures.TimeoutError,
                FrameError,
                schemes.IncompleteSessionError,
            ) as err:
                logger.error("Session %d aborted: %s", session_id, err)
                raise SessionAbortedError(f"Session {session_id} aborted: {err}") from err
            except SessionAbortedError as err:
                logger.error("%s", err)
                raise

        if meter.download != transcript.ledger.total:
            raise SessionAbortedError(
                f"Wire counted {meter.download} answer symbols, "
                f"ledger counted {transcript.ledger.total}"
            )

        logger.info(
            "Session %d decoded message %d with D=%d",
            session_id,
            request.desired_index,
            transcript.download,
        )
        return SessionResult(session_id, transcript, meter)


class Dealer:
    """Loads identical common randomness into every database out of band.
    Its traffic is not part of any session.
    """

    def __init__(self, transport: Transport, params: ProtocolParams) -> None:
        self.transport = transport
        self.params = params

    def deal(self, session_id: int, common: CommonRandomness) -> None:
        """Send one session's shared symbols to all N databases.

        Raises:
            SessionAbortedError: A database did not acknowledge
        """

        frame = wire.setup_frame(
            session_id, common.symbols.tolist(), self.params.field.symbol_bits
        )
        for db_index in range(1, self.params.n + 1):
            try:
                response = wire.decode_frame(
                    self.transport.exchange(db_index, frame.encode())
                )
            except (OSError, EOFError, FrameError) as err:
                raise SessionAbortedError(
                    f"Could not set up database {db_index}: {err}"
                ) from err
            if response.frame_type != FrameType.SETUP:
                raise SessionAbortedError(f"Database {db_index} refused setup")


def make_nodes(
    params: ProtocolParams, store: MessageStore, variant: VariantManager | None = None
) -> list[DatabaseNode]:
    """Build N databases over the same replicated store, set up by a Dealer."""

    return [
        DatabaseNode(n, store, variant, dealer_access=True)
        for n in range(1, params.n + 1)
    ]


@dataclass(frozen=True, eq=False)
class SimulationBatch:
    params: ProtocolParams
    plan: SessionPlan
    seed: int
    results: tuple[SessionResult, ...]

    @property
    def transcripts(self) -> list[Transcript]:
        return [result.transcript for result in self.results]

    def to_dict(self) -> dict:
        return {
            "plan": self.plan.to_dict(),
            "seed": self.seed,
            "sessions": [result.to_dict() for result in self.results],
            "trials": len(self.results),
        }


def _run_trials(
    plan: SessionPlan,
    transport: Transport,
    trials: int,
    rng: np.random.Generator,
    variant: VariantManager,
    timeout: float,
) -> list[SessionResult]:
    params = plan.params
    dealer = Dealer(transport, params)
    client = Client(transport, variant, timeout)
    results = []
    for trial in range(trials):
        session_id = trial + 1
        k = int(rng.integers(1, params.k + 1))
        common = CommonRandomness.random(plan.randomness, params.field, rng)
        user_seed = int(rng.integers(0, 2**63 - 1))
        dealer.deal(session_id, common)
        results.append(
            client.retrieve(plan, schemes.RetrievalRequest(k), user_seed, session_id)
        )
    return results


def simulate(
    params: ProtocolParams,
    plan_kind: str = schemes.PlanKind.FINITE,
    trials: int = 1,
    seed: int = 0,
    variant: VariantManager | None = None,
    network: bool = False,
    timeout: float = DEFAULT_TIMEOUT,
) -> SimulationBatch:
    """Run sessions between a client and N isolated databases.

    The same frames flow whether the databases are in-process or behind
    localhost TCP servers, so both give identical transcripts for a seed.

    Args:
        params (ProtocolParams): Parameters
        plan_kind (str): Plan kind
        trials (int): Sessions to run
        seed (int): Seed for messages, randomness and desired indices
        variant (VariantManager | None): Scheme variant, honest by default
        network (bool): Serve the databases over localhost TCP
        timeout (float): Seconds to wait for a round

    Raises:
        schemes.InfeasibleParamsError: Before any session

    Returns:
        SimulationBatch: Sessions in trial order
    """

    variant = variant or honest()
    plan = schemes.make_plan(plan_kind, params)
    if trials < 0:
        raise core.ParameterError(f"Cannot run {trials} trials")

    rng = core.make_rng(seed)
    store = MessageStore.random(params, rng)
    nodes = make_nodes(params, store, variant)

    if network:
        with serve_in_background(nodes) as endpoints:
            transport: Transport = TcpTransport(endpoints, timeout)
            results = _run_trials(plan, transport, trials, rng, variant, timeout)
    else:
        transport = InProcessTransport(nodes)
        results = _run_trials(plan, transport, trials, rng, variant, timeout)

    logger.info("Simulated %d sessions of the %s plan", trials, plan.kind)
    return SimulationBatch(params, plan, seed, tuple(results))
