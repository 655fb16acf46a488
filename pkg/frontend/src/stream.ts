import type { StreamMessage } from "./types.js";

export interface StreamHandlers {
  onMessage: (message: StreamMessage) => void;
  /** Called after every (re)connect so the owner can re-fetch state. */
  onOpen: () => void;
  onClose: () => void;
}

type SocketFactory = (url: string) => WebSocket;

/** Session event stream with exponential-backoff reconnection. */
export class SessionStream {
  private socket: WebSocket | null = null;
  private attempts = 0;
  private closed = false;
  private timer: ReturnType<typeof setTimeout> | null = null;

  constructor(
    private readonly url: string,
    private readonly handlers: StreamHandlers,
    private readonly socketFactory: SocketFactory = (u) => new WebSocket(u),
  ) {}

  connect(): void {
    if (this.closed) return;
    const socket = this.socketFactory(this.url);
    this.socket = socket;
    socket.onopen = () => {
      this.attempts = 0;
      this.handlers.onOpen();
    };
    socket.onmessage = (event: MessageEvent) => {
      this.handlers.onMessage(JSON.parse(String(event.data)) as StreamMessage);
    };
    socket.onclose = () => {
      this.handlers.onClose();
      this.scheduleReconnect();
    };
    socket.onerror = () => {
      socket.close();
    };
  }

  backoffMs(attempt: number): number {
    return Math.min(500 * 2 ** attempt, 15_000);
  }

  private scheduleReconnect(): void {
    if (this.closed) return;
    const delay = this.backoffMs(this.attempts);
    this.attempts += 1;
    this.timer = setTimeout(() => this.connect(), delay);
  }

  close(): void {
    this.closed = true;
    if (this.timer) clearTimeout(this.timer);
    this.socket?.close();
  }
}
