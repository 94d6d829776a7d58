"""accord: a runtime engine for net-native agreement systems.

Agreements live as instances of named paths (state machines of processes);
interfaces route inbound envelopes to the right instance; a durable store
and event log make every run resumable and replayable.
"""
from .engine import (
    ABSENT,
    Actor,
    AgreementInstance,
    Correlation,
    DataModel,
    Decline,
    Directive,
    DispatchOutcome,
    Engine,
    Existing,
    HookContext,
    IdAllocator,
    InputEnvelope,
    InterfaceDefinition,
    MatchResult,
    New,
    PathDefinition,
    ProcessDefinition,
    RejectInput,
    StageKind,
    Terminate,
    TickClock,
    Transition,
    TransitionRecord,
    Wait,
)
from .stages import PartyRef, StageArchetype, StagePayload, StageSummary

__all__ = [
    "ABSENT",
    "Actor",
    "AgreementInstance",
    "Correlation",
    "DataModel",
    "Decline",
    "Directive",
    "DispatchOutcome",
    "Engine",
    "Existing",
    "HookContext",
    "IdAllocator",
    "InputEnvelope",
    "InterfaceDefinition",
    "MatchResult",
    "New",
    "PartyRef",
    "PathDefinition",
    "ProcessDefinition",
    "RejectInput",
    "StageArchetype",
    "StageKind",
    "StagePayload",
    "StageSummary",
    "Terminate",
    "TickClock",
    "Transition",
    "TransitionRecord",
    "Wait",
]
