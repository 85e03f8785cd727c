// WebSocket session against the synthesis service.

import {
  LineDecoder,
  ParseResult,
  ReadyRecord,
  ServerRecord,
  StartOptions,
  control,
  hello,
  parseRecord,
  start,
  stop,
  trajectory,
  TrajectoryPartWire,
} from "./protocol.js";

export type ConnectionStatus = "disconnected" | "connecting" | "connected" | "retrying";

export interface ClientEvents {
  onStatus?: (status: ConnectionStatus) => void;
  onReady?: (ready: ReadyRecord) => void;
  onRecord?: (record: ServerRecord) => void;
  onProtocolError?: (message: string) => void;
}

export class StudioClient {
  private socket: WebSocket | null = null;
  private decoder = new LineDecoder();
  private retryDelay = 500;
  private closedByUser = false;
  status: ConnectionStatus = "disconnected";
  sessionSerial = 0;

  constructor(
    private url: string,
    private checkpointId: string,
    private events: ClientEvents,
  ) {}

  connect(): void {
    this.closedByUser = false;
    this.setStatus("connecting");
    const socket = new WebSocket(this.url);
    this.socket = socket;
    socket.onopen = () => {
      this.retryDelay = 500;
      this.sessionSerial += 1;
      this.setStatus("connected");
      socket.send(hello(this.checkpointId));
    };
    socket.onmessage = (event) => {
      for (const line of this.decoder.push(String(event.data) + "\n")) {
        this.handleLine(line);
      }
    };
    socket.onclose = () => {
      this.socket = null;
      if (this.closedByUser) {
        this.setStatus("disconnected");
        return;
      }
      this.setStatus("retrying");
      setTimeout(() => this.connect(), this.retryDelay);
      this.retryDelay = Math.min(this.retryDelay * 2, 8000);
    };
    socket.onerror = () => {
      socket.close();
    };
  }

  private handleLine(line: string): void {
    const parsed: ParseResult = parseRecord(line);
    if (!parsed.ok) {
      this.events.onProtocolError?.(parsed.error);
      return;
    }
    if (parsed.record.kind === "ready") {
      this.events.onReady?.(parsed.record);
    }
    this.events.onRecord?.(parsed.record);
  }

  private setStatus(status: ConnectionStatus): void {
    this.status = status;
    this.events.onStatus?.(status);
  }

  private send(text: string): void {
    if (this.socket && this.socket.readyState === WebSocket.OPEN) {
      this.socket.send(text);
    }
  }

  startSession(options: StartOptions): void {
    this.send(start(options));
  }

  sendControl(typeId: number | null, directionXZ: number[] | null, speed: number | null): void {
    this.send(control(typeId, directionXZ, speed));
  }

  sendTrajectory(parts: TrajectoryPartWire[]): void {
    this.send(trajectory(parts));
  }

  stopSession(): void {
    this.send(stop());
  }

  disconnect(): void {
    this.closedByUser = true;
    this.socket?.close();
  }
}
