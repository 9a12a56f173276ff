"""Raw framed TCP listener. One request in flight per connection."""

from __future__ import annotations

import asyncio
import logging
import struct

from porkit.config import MAX_FRAME
from porkit.service.protocol import ErrorCode
from porkit.service.server import StorageServer, error_frame

log = logging.getLogger(__name__)


async def handle_connection(server: StorageServer, reader: asyncio.StreamReader,
                            writer: asyncio.StreamWriter, max_frame: int = MAX_FRAME) -> None:
    try:
        while True:
            try:
                head = await reader.readexactly(4)
            except asyncio.IncompleteReadError:
                break
            (length,) = struct.unpack(">I", head)
            if length == 0 or length > max_frame:
                # The stream cannot be resynchronised past a bogus length.
                writer.write(error_frame(ErrorCode.MALFORMED, f"bad frame length {length}"))
                await writer.drain()
                break
            body = await reader.readexactly(length)
            reply = await asyncio.to_thread(server.dispatch, head + body)
            writer.write(reply)
            await writer.drain()
    except (ConnectionError, asyncio.IncompleteReadError):
        pass
    finally:
        writer.close()


async def start_tcp(server: StorageServer, host: str, port: int,
                    max_frame: int = MAX_FRAME) -> asyncio.base_events.Server:
    return await asyncio.start_server(
        lambda r, w: handle_connection(server, r, w, max_frame), host, port)
