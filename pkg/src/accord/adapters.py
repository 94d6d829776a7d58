"""Mock external platforms with inspectable outboxes, plus inbound normalization.

The social and mail adapters record every outbound effect in an append-only
outbox instead of calling real services; the escrow ledger moves abstract
integer units between balances and per-agreement holds. Inbound platform
events are normalized into the canonical envelope wire shape here, so the
server only ever sees one envelope format.
"""
from __future__ import annotations

import re
import threading
from dataclasses import dataclass
from typing import Any, Callable, Iterable, Mapping, Optional

KEYWORD = "agreement"
VERDICT_TOKENS = ("upheld", "broken")

TAG_RE = re.compile(r"@([A-Za-z0-9_]+)")
TOKEN_RE = re.compile(r"[a-z0-9_]+")


class AdapterError(Exception):
    pass


class EmptyRecipient(AdapterError):
    pass


class InsufficientFunds(AdapterError):
    pass


class UnknownHold(AdapterError):
    pass


class DoubleSettle(AdapterError):
    pass


@dataclass(frozen=True)
class StatusPost:
    status_id: str
    text: str
    thread_id: Optional[str]

    def to_doc(self) -> dict:
        return {"kind": "status", "id": self.status_id, "text": self.text, "thread_id": self.thread_id}


@dataclass(frozen=True)
class DirectMessage:
    to: str
    text: str

    def to_doc(self) -> dict:
        return {"kind": "dm", "to": self.to, "text": self.text}


@dataclass(frozen=True)
class Email:
    to: str
    subject: str
    body: str

    def to_doc(self) -> dict:
        return {"kind": "email", "to": self.to, "subject": self.subject, "body": self.body}


class SocialAdapter:
    """Mock social platform: statuses and DMs land in an outbox."""

    def __init__(self):
        self.outbox: list = []
        self._status_seq = 0
        self._thread_seq = 0
        self._lock = threading.Lock()

    def post_status(self, text: str, thread_id: Optional[str] = None) -> str:
        if not text:
            raise EmptyRecipient("status text must be non-empty")
        with self._lock:
            self._status_seq += 1
            status_id = f"st-{self._status_seq}"
            self.outbox.append(StatusPost(status_id=status_id, text=text, thread_id=thread_id))
            return status_id

    def send_dm(self, to: str, text: str) -> None:
        if not to or not text:
            raise EmptyRecipient("dm requires a recipient and text")
        with self._lock:
            self.outbox.append(DirectMessage(to=to, text=text))

    def mint_thread_id(self) -> str:
        """Thread id for an inbound status that starts a new thread."""
        with self._lock:
            self._thread_seq += 1
            return f"th-{self._thread_seq}"

    @property
    def statuses(self) -> list[StatusPost]:
        return [e for e in self.outbox if isinstance(e, StatusPost)]

    @property
    def dms(self) -> list[DirectMessage]:
        return [e for e in self.outbox if isinstance(e, DirectMessage)]

    def outbox_doc(self) -> list[dict]:
        return [entry.to_doc() for entry in self.outbox]


class MailAdapter:
    """Mock mail automation service."""

    def __init__(self):
        self.outbox: list[Email] = []
        self._lock = threading.Lock()

    def send_email(self, to: str, subject: str, body: str) -> None:
        if not to:
            raise EmptyRecipient("email requires a recipient address")
        with self._lock:
            self.outbox.append(Email(to=to, subject=subject, body=body))

    def outbox_doc(self) -> list[dict]:
        return [entry.to_doc() for entry in self.outbox]


class EscrowLedger:
    """Balances and per-agreement holds in abstract integer units.

    The conserved quantity is sum(balances) + sum(hold amounts): holds move
    funds out of contributor balances, release credits the whole hold to the
    beneficiary, refund restores contributors exactly. Unknown handles may be
    materialized with ``default_balance`` on first touch (a demo convenience;
    zero by default so tests control every grant).
    """

    def __init__(self, balances: Optional[Mapping[str, int]] = None, *, default_balance: int = 0):
        self.balances: dict[str, int] = dict(balances or {})
        self.holds: dict[str, dict] = {}
        self.settled: dict[str, str] = {}
        self.default_balance = default_balance
        self._lock = threading.Lock()

    def grant(self, handle: str, amount: int) -> None:
        if amount < 0:
            raise ValueError("grant amount must be non-negative")
        with self._lock:
            self.balances[handle] = self.balances.get(handle, 0) + amount

    def balance_of(self, handle: str) -> int:
        with self._lock:
            return self.balances.get(handle, 0)

    def hold(self, agreement_id: str, contributions: Iterable[Mapping[str, Any]], beneficiary: str) -> None:
        if not beneficiary:
            raise EmptyRecipient("hold requires a beneficiary")
        with self._lock:
            if agreement_id in self.holds or agreement_id in self.settled:
                raise DoubleSettle(f"agreement {agreement_id!r} already has a hold or settlement")
            merged: dict[str, int] = {}
            order: list[str] = []
            for entry in contributions:
                handle, amount = entry["handle"], entry["amount"]
                if not isinstance(amount, int) or isinstance(amount, bool) or amount <= 0:
                    raise ValueError(f"contribution amount for {handle!r} must be a positive integer")
                if handle not in merged:
                    merged[handle] = 0
                    order.append(handle)
                merged[handle] += amount
            for handle in order:
                if handle not in self.balances and self.default_balance > 0:
                    self.balances[handle] = self.default_balance
                if self.balances.get(handle, 0) < merged[handle]:
                    raise InsufficientFunds(
                        f"{handle!r} has {self.balances.get(handle, 0)}, needs {merged[handle]}"
                    )
            for handle in order:
                self.balances[handle] -= merged[handle]
            self.holds[agreement_id] = {
                "amount": sum(merged.values()),
                "from": [{"handle": h, "amount": merged[h]} for h in order],
                "beneficiary": beneficiary,
            }

    def release(self, agreement_id: str) -> None:
        with self._lock:
            hold = self._take_hold(agreement_id)
            self.balances[hold["beneficiary"]] = (
                self.balances.get(hold["beneficiary"], 0) + hold["amount"]
            )
            self.settled[agreement_id] = "released"

    def refund(self, agreement_id: str) -> None:
        with self._lock:
            hold = self._take_hold(agreement_id)
            for entry in hold["from"]:
                self.balances[entry["handle"]] = (
                    self.balances.get(entry["handle"], 0) + entry["amount"]
                )
            self.settled[agreement_id] = "refunded"

    def _take_hold(self, agreement_id: str) -> dict:
        if agreement_id in self.settled:
            raise DoubleSettle(f"agreement {agreement_id!r} was already {self.settled[agreement_id]}")
        if agreement_id not in self.holds:
            raise UnknownHold(f"no hold for agreement {agreement_id!r}")
        return self.holds.pop(agreement_id)

    def conserved_total(self) -> int:
        with self._lock:
            return sum(self.balances.values()) + sum(h["amount"] for h in self.holds.values())

    def snapshot_doc(self) -> dict:
        with self._lock:
            return {
                "balances": dict(self.balances),
                "holds": {k: dict(v) for k, v in self.holds.items()},
                "settled": dict(self.settled),
            }


# --------------------------------------------------------------------------
# Inbound normalization

def tokens_of(text: str) -> list[str]:
    return TOKEN_RE.findall(text.lower())


def has_keyword(text: str, keyword: str = KEYWORD) -> bool:
    return keyword in tokens_of(text)


def extract_tags(text: str) -> list[str]:
    return TAG_RE.findall(text)


def extract_counterparty(text: str, *, sender: str, bot_handle: str) -> Optional[str]:
    """First tagged handle that is neither the bot nor the sender."""
    for tag in extract_tags(text):
        if tag not in (sender, bot_handle):
            return tag
    return None


def extract_verdict(text: str, verdicts: Iterable[str] = VERDICT_TOKENS) -> Optional[str]:
    wanted = {v.lower() for v in verdicts}
    for token in tokens_of(text):
        if token in wanted:
            return token
    return None


def normalize_social_event(event: Mapping[str, Any], *, bot_handle: str) -> dict:
    """Convert a raw platform event into the canonical envelope wire body."""
    kind = event.get("kind") or ""
    actor = event.get("actor") or ""
    text = event.get("text") or ""
    thread_id = event.get("thread_id")
    payload: dict[str, Any] = {"text": text}
    if kind in ("status", "status_mention"):
        kind = "status_mention"
        counterparty = extract_counterparty(text, sender=actor, bot_handle=bot_handle)
        if counterparty is not None:
            payload["counterparty"] = counterparty
    elif kind == "reply":
        verdict = extract_verdict(text)
        if verdict is not None:
            payload["verdict"] = verdict
    body: dict[str, Any] = {
        "source": "social",
        "kind": kind,
        "actor": {"platform": "social", "handle": actor},
        "payload": payload,
    }
    if thread_id is not None:
        body["correlation"] = {"thread_id": thread_id}
    return body


class SocialInjector:
    """Turns platform events into envelopes and pushes them at a path endpoint.

    ``send`` is any callable posting a wire body to a path and returning the
    decoded dispatch outcome (tests pass an engine shim, the CLI passes an
    HTTP client call).
    """

    def __init__(self, send: Callable[[str, dict], dict], path_name: str, bot_handle: str,
                 social: Optional[SocialAdapter] = None):
        self.send = send
        self.path_name = path_name
        self.bot_handle = bot_handle
        self.social = social

    def inject(self, kind: str, actor: str, text: str, thread_id: Optional[str] = None) -> dict:
        if kind in ("status", "status_mention") and thread_id is None and self.social is not None:
            thread_id = self.social.mint_thread_id()
        body = normalize_social_event(
            {"kind": kind, "actor": actor, "text": text, "thread_id": thread_id},
            bot_handle=self.bot_handle,
        )
        return self.send(self.path_name, body)
