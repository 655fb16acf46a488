import { describe, expect, it, vi } from "vitest";

import { SessionStream } from "../src/stream.js";
import type { StreamMessage } from "../src/types.js";

class FakeSocket {
  onopen: (() => void) | null = null;
  onmessage: ((event: { data: string }) => void) | null = null;
  onclose: (() => void) | null = null;
  onerror: (() => void) | null = null;
  closed = false;

  close(): void {
    this.closed = true;
    this.onclose?.();
  }
}

function makeStream(sockets: FakeSocket[]) {
  const handlers = {
    onMessage: vi.fn<(m: StreamMessage) => void>(),
    onOpen: vi.fn(),
    onClose: vi.fn(),
  };
  const stream = new SessionStream(
    "ws://test/sessions/x/stream",
    handlers,
    () => {
      const socket = new FakeSocket();
      sockets.push(socket);
      return socket as unknown as WebSocket;
    },
  );
  return { stream, handlers };
}

describe("SessionStream", () => {
  it("notifies on open and delivers parsed messages", () => {
    const sockets: FakeSocket[] = [];
    const { stream, handlers } = makeStream(sockets);
    stream.connect();
    sockets[0].onopen?.();
    expect(handlers.onOpen).toHaveBeenCalledTimes(1);
    sockets[0].onmessage?.({ data: JSON.stringify({ type: "state", step: 0 }) });
    expect(handlers.onMessage).toHaveBeenCalledWith(expect.objectContaining({ type: "state" }));
    stream.close();
  });

  it("reconnects after a close with growing backoff", () => {
    vi.useFakeTimers();
    const sockets: FakeSocket[] = [];
    const { stream, handlers } = makeStream(sockets);
    stream.connect();
    sockets[0].onclose?.();
    expect(handlers.onClose).toHaveBeenCalledTimes(1);
    vi.advanceTimersByTime(600);
    expect(sockets).toHaveLength(2);
    sockets[1].onclose?.();
    vi.advanceTimersByTime(600);  // second backoff is 1s, not yet due
    expect(sockets).toHaveLength(2);
    vi.advanceTimersByTime(500);
    expect(sockets).toHaveLength(3);
    stream.close();
    vi.useRealTimers();
  });

  it("stops reconnecting once closed", () => {
    vi.useFakeTimers();
    const sockets: FakeSocket[] = [];
    const { stream } = makeStream(sockets);
    stream.connect();
    stream.close();
    vi.advanceTimersByTime(60_000);
    expect(sockets).toHaveLength(1);
    vi.useRealTimers();
  });

  it("backoff is capped", () => {
    const { stream } = makeStream([]);
    expect(stream.backoffMs(0)).toBe(500);
    expect(stream.backoffMs(3)).toBe(4000);
    expect(stream.backoffMs(20)).toBe(15000);
  });
});
