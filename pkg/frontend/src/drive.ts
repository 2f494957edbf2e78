/** Human driving: pedal/steer inputs to velocity and steering commands. */

export interface DriveInput {
    throttle: number; // [0, 1]
    brake: number; // [0, 1]
    steer: number; // [-1, 1], positive steers left
    timestamp: number;
}

export interface DriveParams {
    aUi: number; // pedal authority, m/s^2 at full throttle
    steerMax: number; // rad
    vMax: number; // m/s
}

export const DEFAULT_DRIVE_PARAMS: DriveParams = {
    aUi: 3.0,
    steerMax: 0.6981317007977318, // 40 deg
    vMax: 14.0,
};

export function clampInput(input: DriveInput): DriveInput {
    return {
        throttle: Math.min(1, Math.max(0, input.throttle)),
        brake: Math.min(1, Math.max(0, input.brake)),
        steer: Math.min(1, Math.max(-1, input.steer)),
        timestamp: input.timestamp,
    };
}

/** One 50 ms driving tick: integrate the velocity command, map steering.
 *
 * vCmd += (throttle - brake) * aUi * dt, floored at zero (no reverse) and
 * capped at vMax; phiCmd = steer * steerMax.
 */
export function applyDrive(
    vCmd: number,
    input: DriveInput,
    dt: number,
    params: DriveParams = DEFAULT_DRIVE_PARAMS,
): { vCmd: number; phiCmd: number } {
    const clamped = clampInput(input);
    const next = vCmd + (clamped.throttle - clamped.brake) * params.aUi * dt;
    return {
        vCmd: Math.min(params.vMax, Math.max(0, next)),
        phiCmd: clamped.steer * params.steerMax,
    };
}

/** Keyboard state to pedals: documented binding.
 *
 * ArrowUp / W  -> throttle 1
 * ArrowDown / S -> brake 1
 * ArrowLeft / A -> steer +1 (left), ArrowRight / D -> steer -1 (right)
 * Space -> full brake override
 */
export function inputFromKeys(keys: Set<string>, timestamp: number): DriveInput {
    const throttle = keys.has("ArrowUp") || keys.has("KeyW") ? 1 : 0;
    let brake = keys.has("ArrowDown") || keys.has("KeyS") ? 1 : 0;
    if (keys.has("Space")) {
        brake = 1;
    }
    let steer = 0;
    if (keys.has("ArrowLeft") || keys.has("KeyA")) steer += 1;
    if (keys.has("ArrowRight") || keys.has("KeyD")) steer -= 1;
    return clampInput({ throttle, brake, steer, timestamp });
}
