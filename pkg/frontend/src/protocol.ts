/** Wire protocol: newline-delimited JSON, one object per line.
 *
 * All coordinates are full-scale meters. The shapes mirror the coordinator's
 * schemas exactly; decode rejects anything without a known "type".
 */

export interface RegisterMsg {
    type: "register";
    id: string;
    kind: "virtual" | "physical" | "hdv" | "console";
    frame: "mini" | "full";
}

export interface StateMsg {
    type: "state";
    id: string;
    t: number;
    x: number;
    y: number;
    theta: number;
    v: number;
}

export interface ObsMsg {
    type: "obs";
    id: string;
    t_cap: number;
    x: number;
    y: number;
    theta: number;
}

export interface CmdMsg {
    type: "cmd";
    id: string;
    t: number;
    v_cmd: number;
    phi_cmd: number;
}

export interface ObstacleMsg {
    type: "obstacle";
    x: number;
    y: number;
    r: number;
}

export interface PerturbMsg {
    type: "perturb";
    id: string;
    dv: number;
}

export interface FacilityMsg {
    type: "facility";
    id: string;
    state: "on" | "off" | "red" | "yellow" | "green" | "up" | "down";
}

export interface TickMsg {
    type: "tick";
    t: number;
    step: number;
}

export interface TickAckMsg {
    type: "tick_ack";
    step: number;
    id: string;
}

export interface SnapshotVehicle {
    id: string;
    t: number;
    x: number;
    y: number;
    theta: number;
    v: number;
}

export interface SnapshotMsg {
    type: "snapshot";
    t: number;
    vehicles: SnapshotVehicle[];
    obstacles: { x: number; y: number; r: number }[];
    facilities?: { id: string; state: string }[];
}

export type WireMessage =
    | RegisterMsg
    | StateMsg
    | ObsMsg
    | CmdMsg
    | ObstacleMsg
    | PerturbMsg
    | FacilityMsg
    | TickMsg
    | TickAckMsg
    | SnapshotMsg;

const KNOWN_TYPES = new Set([
    "register", "state", "obs", "cmd", "obstacle",
    "perturb", "facility", "tick", "tick_ack", "snapshot",
]);

export class MalformedFrame extends Error {}

/** Serialize one message as a newline-terminated line. */
export function encodeLine(msg: WireMessage): string {
    return JSON.stringify(msg) + "\n";
}

/** Parse one line; throws MalformedFrame for junk or unknown types. */
export function decodeLine(line: string): WireMessage {
    const text = line.trim();
    if (text.length === 0) {
        throw new MalformedFrame("empty frame");
    }
    let obj: unknown;
    try {
        obj = JSON.parse(text);
    } catch (err) {
        throw new MalformedFrame(`invalid JSON: ${(err as Error).message}`);
    }
    if (typeof obj !== "object" || obj === null || Array.isArray(obj)) {
        throw new MalformedFrame("frame is not an object");
    }
    const type = (obj as { type?: unknown }).type;
    if (typeof type !== "string" || !KNOWN_TYPES.has(type)) {
        throw new MalformedFrame(`unknown message type ${String(type)}`);
    }
    return obj as WireMessage;
}
