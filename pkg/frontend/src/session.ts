/** Live console session over the coordinator's stream endpoint.
 *
 * The console never mutates simulation state directly: everything it does
 * (drive, obstacles, perturbations, facilities) goes out as wire messages.
 * The socket constructor is injected so the same session code runs in the
 * browser (native WebSocket) and under Node tests (the ws package).
 */

import { decodeLine, encodeLine, MalformedFrame, WireMessage } from "./protocol.js";

export interface SocketLike {
    send(data: string): void;
    close(): void;
    // eslint-disable-next-line @typescript-eslint/no-explicit-any
    onopen: ((ev: any) => void) | null;
    onmessage: ((ev: any) => void) | null;
    onclose: ((ev: any) => void) | null;
    onerror: ((ev: any) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export function wsUrl(base: string): string {
    const url = new URL(base);
    url.protocol = url.protocol === "https:" ? "wss:" : "ws:";
    url.pathname = "/ws";
    url.search = "";
    return url.toString();
}

export class Session {
    private handlers: ((msg: WireMessage) => void)[] = [];
    private closeHandlers: (() => void)[] = [];
    lastMessageWallMs: number | null = null;

    private constructor(private sock: SocketLike) {
        sock.onmessage = (ev: { data: unknown }) => {
            const text = typeof ev.data === "string" ? ev.data : String(ev.data);
            for (const line of text.split("\n")) {
                if (!line.trim()) continue;
                let msg: WireMessage;
                try {
                    msg = decodeLine(line);
                } catch (err) {
                    if (err instanceof MalformedFrame) continue;
                    throw err;
                }
                this.lastMessageWallMs = Date.now();
                for (const handler of this.handlers) handler(msg);
            }
        };
        sock.onclose = () => {
            for (const handler of this.closeHandlers) handler();
        };
    }

    /** Open the socket and register as a console. */
    static connect(
        base: string,
        consoleId: string,
        factory: SocketFactory,
    ): Promise<Session> {
        return new Promise((resolve, reject) => {
            const sock = factory(wsUrl(base));
            const session = new Session(sock);
            sock.onopen = () => {
                session.send({ type: "register", id: consoleId, kind: "console", frame: "full" });
                resolve(session);
            };
            sock.onerror = (ev) => reject(ev instanceof Error ? ev : new Error("socket error"));
        });
    }

    send(msg: WireMessage): void {
        this.sock.send(encodeLine(msg));
    }

    onMessage(handler: (msg: WireMessage) => void): void {
        this.handlers.push(handler);
    }

    onClose(handler: () => void): void {
        this.closeHandlers.push(handler);
    }

    close(): void {
        this.sock.close();
    }
}
