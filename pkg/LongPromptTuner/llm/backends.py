"""Text-generation backends: a chat-completion endpoint and a scripted replay backend."""

from __future__ import annotations

import inspect
import logging
from collections import defaultdict
from collections.abc import Awaitable, Callable, Mapping, Sequence
from pathlib import Path
from typing import Any, Protocol

import aiohttp
from pydantic import BaseModel, Field, ValidationError

from llm.errors import FixtureMissing, MalformedReply
from llm.models import BackendReply, GenerationRequest, Tag

_logger = logging.getLogger(f"tuner.{__name__}")

Responder = Callable[[GenerationRequest], "str | None | Awaitable[str | None]"]


class Backend(Protocol):
    @property
    def backend_id(self) -> str: ...

    async def complete(self, request: GenerationRequest) -> BackendReply: ...

    def snapshot(self) -> dict[str, int]: ...

    def restore(self, state: Mapping[str, int]) -> None: ...


class ChatMessage(BaseModel):
    content: str | None = None


class ChatChoice(BaseModel):
    message: ChatMessage


class ChatUsage(BaseModel):
    prompt_tokens: int | None = None
    completion_tokens: int | None = None


class ChatCompletion(BaseModel):
    """The parts of a chat-completion response body the tuner reads."""

    choices: list[ChatChoice] = Field(min_length=1)
    usage: ChatUsage | None = None


class LiveBackend:
    """Chat-completion endpoint reached over HTTP.

    The payload is the usual ``{"model", "messages", "temperature", "max_tokens"}`` shape,
    extended by ``extra_payload`` for endpoint-specific keys.
    """

    def __init__(
        self,
        *,
        endpoint: str,
        model: str,
        token: str,
        extra_payload: Mapping[str, Any] | None = None,
        timeout: float = 300,
    ) -> None:
        self._endpoint = endpoint
        self._model = model
        self._http_headers = {"Authorization": f"Bearer {token}"}
        self._extra_payload = dict(extra_payload or {})
        self._timeout = aiohttp.ClientTimeout(total=timeout)

    @property
    def backend_id(self) -> str:
        return f"live:{self._endpoint}:{self._model}"

    async def complete(self, request: GenerationRequest) -> BackendReply:
        messages = []
        if request.system_text:
            messages.append({"role": "system", "content": request.system_text})
        messages.append({"role": "user", "content": request.user_text})
        payload = {
            "model": self._model,
            "messages": messages,
            "temperature": request.temperature,
            "max_tokens": request.max_output,
            **self._extra_payload,
        }

        _logger.debug("POST %s (%s)", self._endpoint, request.tag)
        async with aiohttp.ClientSession(headers=self._http_headers, timeout=self._timeout) as s:
            async with s.post(self._endpoint, json=payload) as response:
                response.raise_for_status()
                body = await response.text()

        try:
            completion = ChatCompletion.model_validate_json(body)
        except ValidationError as e:
            raise MalformedReply(f"Unexpected reply from {self._endpoint}: {body[:200]!r}") from e

        usage = completion.usage or ChatUsage()
        return BackendReply(
            text=completion.choices[0].message.content or "",
            input_tokens=usage.prompt_tokens,
            output_tokens=usage.completion_tokens,
        )

    def snapshot(self) -> dict[str, int]:
        return {}

    def restore(self, state: Mapping[str, int]) -> None:
        pass


class ScriptedBackend:
    """Replays canned replies, making the whole pipeline deterministic.

    A request is answered from the first source that has a reply:

    1. ``<fixtures_dir>/pinned/<digest>.txt``, addressed by the request digest
    2. a responder callable registered for the request's tag (returning None passes on)
    3. the next entry of the in-memory reply list for the tag
    4. ``<fixtures_dir>/<tag>/<NNN>.txt``, by ordinal within the tag

    Ordinals only advance for sources 3 and 4.

    :param fixtures_dir: Directory of fixture files, optional
    :param replies: In-memory reply sequences per tag
    :param responders: Per-tag callables computing a reply from the request
    """

    def __init__(
        self,
        *,
        fixtures_dir: Path | None = None,
        replies: Mapping[Tag, Sequence[str]] | None = None,
        responders: Mapping[Tag, Responder] | None = None,
        backend_id: str = "scripted",
    ) -> None:
        self._fixtures_dir = fixtures_dir
        self._replies = {tag: list(texts) for tag, texts in (replies or {}).items()}
        self._responders = dict(responders or {})
        self._backend_id = backend_id
        self._ordinals: defaultdict[Tag, int] = defaultdict(int)
        self.requests: list[GenerationRequest] = []

    @property
    def backend_id(self) -> str:
        return self._backend_id

    async def complete(self, request: GenerationRequest) -> BackendReply:
        self.requests.append(request)
        return BackendReply(text=await self._reply_for(request))

    async def _reply_for(self, request: GenerationRequest) -> str:
        if self._fixtures_dir is not None:
            pinned = self._fixtures_dir / "pinned" / f"{request.digest(self.backend_id)}.txt"
            if pinned.exists():
                return pinned.read_text(encoding="UTF-8")

        if responder := self._responders.get(request.tag):
            reply = responder(request)
            if inspect.isawaitable(reply):
                reply = await reply
            if reply is not None:
                return reply

        ordinal = self._ordinals[request.tag]
        replies = self._replies.get(request.tag, [])
        if ordinal < len(replies):
            self._ordinals[request.tag] += 1
            return replies[ordinal]

        if self._fixtures_dir is not None:
            fixture = self._fixtures_dir / str(request.tag) / f"{ordinal:03d}.txt"
            if fixture.exists():
                self._ordinals[request.tag] += 1
                return fixture.read_text(encoding="UTF-8")

        raise FixtureMissing(f"No scripted reply for {request.tag} #{ordinal}")

    def snapshot(self) -> dict[str, int]:
        """Ordinal positions per tag, so a resumed run continues where it stopped."""
        return {str(tag): ordinal for tag, ordinal in self._ordinals.items()}

    def restore(self, state: Mapping[str, int]) -> None:
        self._ordinals = defaultdict(int, {Tag(tag): ordinal for tag, ordinal in state.items()})
