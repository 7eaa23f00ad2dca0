"""Optional adapter that swaps the user or agent side for an HTTP endpoint.

Wire contract: the adapter POSTs a JSON body {"role": "agent"|"user",
"directive": <system text>, "history": [token, ...]} and expects
{"token": <closed-vocabulary value>, "text": <optional rendering>}.
Timeouts and malformed replies never crash a dialogue: the session is
terminated Refusal-safe (closed as Timeout) and the failure is logged.
"""

from __future__ import annotations

import json
import logging
import urllib.error
import urllib.request
from dataclasses import dataclass, field

from .user_model import (
    AgentAction,
    DialogueOutcome,
    UserToken,
)

log = logging.getLogger(__name__)

DEFAULT_TIMEOUT_S = 5.0


class BackendError(Exception):
    """Endpoint unreachable, timed out, or answered outside the contract."""


@dataclass
class ChatBackend:
    url: str
    timeout_s: float = DEFAULT_TIMEOUT_S
    failures: list[str] = field(default_factory=list)

    def exchange(self, role: str, directive: str, history: list[str]) -> str:
        body = json.dumps({
            "role": role,
            "directive": directive,
            "history": history,
        }).encode("utf-8")
        request = urllib.request.Request(
            self.url, data=body, headers={"Content-Type": "application/json"}
        )
        try:
            with urllib.request.urlopen(request, timeout=self.timeout_s) as resp:
                payload = json.loads(resp.read().decode("utf-8"))
        except (urllib.error.URLError, OSError, json.JSONDecodeError) as err:
            raise BackendError(f"backend exchange failed: {err}") from err
        token = payload.get("token") if isinstance(payload, dict) else None
        if not isinstance(token, str):
            raise BackendError(f"malformed backend response: {payload!r}")
        return token

    def _note_failure(self, reason: str) -> None:
        self.failures.append(reason)
        log.warning("chat backend failure, closing dialogue as timeout: %s", reason)


@dataclass(frozen=True)
class BackendDialogueResult:
    tokens: list[UserToken]
    actions: list[AgentAction]
    outcome: DialogueOutcome
    turns: int


def run_backend_dialogue(
    backend: ChatBackend,
    *,
    user_directive: str = "",
    agent_directive: str = "",
    agent_policy=None,
    t_max: int = 15,
) -> BackendDialogueResult:
    """Drive a dialogue where the user side lives behind the endpoint.

    The agent side is a callable(history) -> AgentAction; when None, the
    endpoint plays the agent too. Agree/Refuse from the user terminate the
    dialogue, otherwise it times out at `t_max` turns. Vocabulary
    violations and transport failures close the session as Timeout.
    """
    tokens: list[UserToken] = []
    actions: list[AgentAction] = []
    history: list[str] = []
    for turn in range(1, t_max + 1):
        if agent_policy is not None:
            action = agent_policy(history)
        else:
            try:
                raw = backend.exchange("agent", agent_directive, history)
                action = AgentAction(raw)
            except (BackendError, ValueError) as err:
                backend._note_failure(str(err))
                return BackendDialogueResult(tokens, actions, DialogueOutcome.TIMEOUT, turn - 1)
        actions.append(action)
        history.append(action.value)

        try:
            raw = backend.exchange("user", user_directive, history)
            token = UserToken(raw)
        except (BackendError, ValueError) as err:
            backend._note_failure(str(err))
            return BackendDialogueResult(tokens, actions, DialogueOutcome.TIMEOUT, turn)
        tokens.append(token)
        history.append(token.value)
        if token is UserToken.AGREE:
            return BackendDialogueResult(tokens, actions, DialogueOutcome.SUCCESS, turn)
        if token is UserToken.REFUSE:
            return BackendDialogueResult(tokens, actions, DialogueOutcome.REFUSAL, turn)
    return BackendDialogueResult(tokens, actions, DialogueOutcome.TIMEOUT, t_max)
