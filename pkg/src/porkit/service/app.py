"""HTTP front end. Protocol frames travel as ``application/octet-stream``
bodies of ``POST /frame``; the JSON endpoints are for operators."""

from __future__ import annotations

import os

from fastapi import FastAPI, HTTPException, Request, Response
from fastapi.concurrency import run_in_threadpool
from pydantic import BaseModel

from porkit.config import MAX_FRAME, STORE_ENV
from porkit.service.protocol import ErrorCode
from porkit.service.server import StorageServer, error_frame

OCTET = "application/octet-stream"


class Health(BaseModel):
    status: str
    files: int


class FileInfo(BaseModel):
    file_id: str
    scheme: int
    n: int
    f: int
    created: float
    dynamic: bool


def create_app(store_dir: str | os.PathLike | None = None) -> FastAPI:
    store_dir = store_dir or os.environ.get(STORE_ENV, "porkit-store")
    server = StorageServer(store_dir)
    app = FastAPI(title="porkit storage server")
    app.state.server = server

    def info(e) -> FileInfo:
        return FileInfo(file_id=e.file_id, scheme=e.scheme, n=e.n, f=e.f, created=e.created, dynamic=e.dynamic)

    @app.post("/frame")
    async def frame(request: Request) -> Response:
        body = await request.body()
        if len(body) > MAX_FRAME + 4:
            reply = error_frame(ErrorCode.MALFORMED, "frame exceeds the size limit")
        else:
            reply = await run_in_threadpool(server.dispatch, body)
        return Response(content=reply, media_type=OCTET)

    @app.get("/health", response_model=Health)
    def health() -> Health:
        return Health(status="ok", files=len(server.entries()))

    @app.get("/files", response_model=list[FileInfo])
    def files() -> list[FileInfo]:
        return [info(e) for e in server.entries()]

    @app.get("/files/{file_id}", response_model=FileInfo)
    def file(file_id: str) -> FileInfo:
        entry = server.entry(file_id)
        if entry is None:
            raise HTTPException(status_code=404, detail="unknown file")
        return info(entry)

    return app
