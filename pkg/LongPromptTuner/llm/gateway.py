from __future__ import annotations

import asyncio
import logging
from collections.abc import Callable, Mapping
from pathlib import Path
from typing import Any, TypeVar

import aiofiles
import aiohttp
from pydantic import BaseModel
from tenacity import (
    AsyncRetrying,
    RetryError,
    retry_if_exception_type,
    stop_after_attempt,
    wait_exponential,
)

from llm.backends import Backend
from llm.errors import BackendUnavailable, MalformedReply, NoParseableBlock
from llm.json_blocks import extract_json_block
from llm.ledger import UsageLedger, estimate_tokens
from llm.models import BackendReply, GenerationRequest, Tag

_logger = logging.getLogger(f"tuner.{__name__}")

DEFAULT_MAX_OUTPUT = 4096

_TRANSIENT_ERRORS = (aiohttp.ClientError, asyncio.TimeoutError, ConnectionError, MalformedReply)

T = TypeVar("T")


class GenerationCache(BaseModel):
    backend_id: str
    replies_by_digest: dict[str, str]


class Gateway:
    """Shared entry point for every text-generation call.

    Temperature-0 requests are cached by digest, concurrent identical requests share one
    backend call. Every completed call is recorded in the usage ledger.

    :param backend: Where replies come from
    :param ledger: Usage accounting, optionally with a token cap
    :param parallelism: Maximum number of backend calls in flight
    :param max_output: Per-tag output token limits
    :param generation_temperature: Temperature of generation-role requests
    :param cache_file: JSON file the temperature-0 cache is loaded from and flushed to
    :param retry_attempts: Attempts per request before giving up
    :param retry_wait: First backoff delay in seconds, doubled after each failure
    """

    def __init__(
        self,
        backend: Backend,
        *,
        ledger: UsageLedger | None = None,
        parallelism: int = 4,
        max_output: Mapping[Tag, int] | None = None,
        generation_temperature: float = 0.5,
        cache_file: Path | None = None,
        retry_attempts: int = 3,
        retry_wait: float = 1.0,
    ) -> None:
        self.backend = backend
        self.ledger = ledger if ledger is not None else UsageLedger()
        self._semaphore = asyncio.Semaphore(parallelism)
        self._max_output = dict(max_output or {})
        self._generation_temperature = generation_temperature
        self._retry_attempts = retry_attempts
        self._retry_wait = retry_wait

        self._cache_file = cache_file
        self._cache: dict[str, str] = {}
        self._in_flight: dict[str, asyncio.Future[str]] = {}
        self._cache_lock = asyncio.Lock()
        self._ledger_lock = asyncio.Lock()
        self._reserved_tokens = 0

        self._load_cache()

    def _load_cache(self) -> None:
        if self._cache_file is None or not self._cache_file.exists():
            return

        file_content = self._cache_file.read_bytes()
        if not file_content:
            return

        cache = GenerationCache.model_validate_json(file_content)
        if cache.backend_id != self.backend.backend_id:
            _logger.warning(
                "Ignoring generation cache of backend %s (now using %s)",
                cache.backend_id,
                self.backend.backend_id,
            )
            return
        self._cache = dict(cache.replies_by_digest)
        _logger.info("Loaded %d cached replies from %s", len(self._cache), self._cache_file)

    async def flush_cache(self) -> None:
        if self._cache_file is None:
            return
        async with self._cache_lock:
            cache = GenerationCache(
                backend_id=self.backend.backend_id, replies_by_digest=dict(self._cache)
            )
        async with aiofiles.open(self._cache_file, "w") as f:
            await f.write(cache.model_dump_json())

    @property
    def cache_size(self) -> int:
        return len(self._cache)

    def build_request(
        self,
        tag: Tag,
        user_text: str,
        *,
        system_text: str = "",
        temperature: float | None = None,
    ) -> GenerationRequest:
        """Evaluation requests run at temperature 0, every other role at the generation
        temperature unless told otherwise."""
        if temperature is None:
            temperature = 0.0 if tag is Tag.EVALUATION else self._generation_temperature
        return GenerationRequest(
            tag=tag,
            user_text=user_text,
            system_text=system_text,
            temperature=temperature,
            max_output=self._max_output.get(tag, DEFAULT_MAX_OUTPUT),
        )

    async def ask(
        self,
        tag: Tag,
        user_text: str,
        *,
        system_text: str = "",
        temperature: float | None = None,
    ) -> str:
        request = self.build_request(
            tag, user_text, system_text=system_text, temperature=temperature
        )
        return await self.generate(request)

    async def ask_json(
        self,
        tag: Tag,
        user_text: str,
        parse: Callable[[Any], T],
        *,
        reasks: int = 1,
    ) -> T:
        """Ask for a JSON reply and convert it with `parse`, asking again when that fails.

        :param parse: Converts the decoded JSON value, raising ValueError (or
          NoParseableBlock) when the value has the wrong shape
        :param reasks: How often to ask again after an unusable reply
        :raises NoParseableBlock: No reply could be used
        """
        failure: Exception | None = None
        request = self.build_request(tag, user_text)
        for attempt in range(reasks + 1):
            reply = await self.generate(request)
            try:
                return parse(extract_json_block(reply))
            except (NoParseableBlock, ValueError) as e:
                failure = e
                # an unusable reply must not be served again from the cache
                self._cache.pop(request.digest(self.backend.backend_id), None)
                _logger.warning("Unusable %s reply (attempt %d): %s", tag, attempt + 1, e)
        raise NoParseableBlock(f"No usable {tag} reply after {reasks + 1} attempts") from failure

    async def generate(self, request: GenerationRequest) -> str:
        """Reply text for a request.

        :raises BackendUnavailable: The backend failed on every attempt
        :raises BudgetExceeded: The request would cross the ledger's token cap
        :raises FixtureMissing: A scripted backend has no reply for the request
        """
        if request.temperature != 0:
            return await self._call(request)

        digest = request.digest(self.backend.backend_id)
        async with self._cache_lock:
            if digest in self._cache:
                return self._cache[digest]
            waiting_on = self._in_flight.get(digest)
            if waiting_on is None:
                owned = asyncio.get_running_loop().create_future()
                self._in_flight[digest] = owned

        if waiting_on is not None:
            return await asyncio.shield(waiting_on)

        try:
            text = await self._call(request)
        except asyncio.CancelledError:
            owned.cancel()
            raise
        except Exception as e:
            owned.set_exception(e)
            # marks the exception as retrieved when nobody else is waiting
            owned.exception()
            raise
        else:
            self._cache[digest] = text
            owned.set_result(text)
            return text
        finally:
            async with self._cache_lock:
                self._in_flight.pop(digest, None)

    async def _call(self, request: GenerationRequest) -> str:
        projected = estimate_tokens(request.system_text + " " + request.user_text)
        projected += request.max_output
        async with self._ledger_lock:
            self.ledger.check_budget(projected, reserved=self._reserved_tokens)
            self._reserved_tokens += projected

        try:
            async with self._semaphore:
                reply = await self._complete_with_retries(request)
        except BackendUnavailable:
            async with self._ledger_lock:
                self.ledger.record_failure(request.tag)
            raise
        finally:
            async with self._ledger_lock:
                self._reserved_tokens -= projected

        approximate = reply.input_tokens is None or reply.output_tokens is None
        input_tokens = reply.input_tokens
        if input_tokens is None:
            input_tokens = estimate_tokens(request.system_text + " " + request.user_text)
        output_tokens = reply.output_tokens
        if output_tokens is None:
            output_tokens = estimate_tokens(reply.text)

        async with self._ledger_lock:
            self.ledger.record(
                request.tag,
                input_tokens=input_tokens,
                output_tokens=output_tokens,
                approximate=approximate,
            )
        return reply.text

    async def _complete_with_retries(self, request: GenerationRequest) -> BackendReply:
        retrying = AsyncRetrying(
            stop=stop_after_attempt(self._retry_attempts),
            wait=wait_exponential(multiplier=self._retry_wait, max=60),
            retry=retry_if_exception_type(_TRANSIENT_ERRORS),
        )
        try:
            async for attempt in retrying:
                with attempt:
                    if attempt.retry_state.attempt_number > 1:
                        _logger.info(
                            "Retrying %s request (attempt %d)",
                            request.tag,
                            attempt.retry_state.attempt_number,
                        )
                    return await self.backend.complete(request)
        except RetryError as e:
            cause = e.last_attempt.exception()
            _logger.error(
                "Backend failed %d times for %s: %s", self._retry_attempts, request.tag, cause
            )
            raise BackendUnavailable(f"{request.tag} request failed: {cause}") from cause
