/** Thin WebSocket session wrapper: decode inbound, encode outbound. */

import { decodeMessage, encodeMessage, Message, Role } from "./protocol.js";

export interface SessionCallbacks {
  onMessage(message: Message): void;
  onClose(): void;
}

export class Session {
  private socket: WebSocket;

  constructor(url: string, role: Role, tanks: number[],
              callbacks: SessionCallbacks) {
    this.socket = new WebSocket(url);
    this.socket.onopen = () => {
      this.send({ kind: "hello", sessionId: "", role, tanks });
    };
    this.socket.onmessage = (event) => {
      callbacks.onMessage(decodeMessage(String(event.data)));
    };
    this.socket.onclose = () => callbacks.onClose();
  }

  send(message: Message): void {
    if (this.socket.readyState === WebSocket.OPEN) {
      this.socket.send(encodeMessage(message));
    }
  }

  close(): void {
    this.socket.close();
  }
}
