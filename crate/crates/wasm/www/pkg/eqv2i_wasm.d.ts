/* tslint:disable */
/* eslint-disable */

export class Scene {
    free(): void;
    [Symbol.dispose](): void;
    arm_length(): number;
    /**
     * Most likely beam of every agent.
     */
    greedy_beams(): Uint32Array;
    /**
     * Sum rate of the greedy beams.
     */
    greedy_reward(): number;
    is_equivariant(): boolean;
    n_beams(): number;
    constructor(seed: bigint);
    /**
     * Draw fresh vehicles.
     */
    resample(seed: bigint): void;
    /**
     * Rotate every vehicle a quarter turn about the intersection centre.
     */
    rotate(): void;
    /**
     * Largest change of any action probability when the scene is rotated
     * and the beams relabelled accordingly.
     */
    rotation_residual(): number;
    rsus(): Float64Array;
    /**
     * Switch between the equivariant and the plain message-passing policy.
     */
    set_equivariant(on: boolean): void;
    turns(): number;
    /**
     * Arm served by each vehicle in `vehicles`.
     */
    vehicle_arms(): Uint32Array;
    /**
     * Vehicle positions as x0, y0, x1, y1, ...
     */
    vehicles(): Float64Array;
}

/**
 * Beam relabelling of a quarter turn in the demo codebook.
 */
export function rotated_beam(beam: number): number;

/**
 * Random layer from the planar rotation plus a bias input to `copies`
 * copies of the regular representation, before and after projection onto
 * the equivariant maps. Returns [residual before, residual after, rank of
 * the equivariant space, free parameters of the dense layer].
 */
export function symmetrize_random(seed: bigint, copies: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_scene_free: (a: number, b: number) => void;
    readonly rotated_beam: (a: number) => number;
    readonly scene_arm_length: (a: number) => number;
    readonly scene_greedy_beams: (a: number) => [number, number];
    readonly scene_greedy_reward: (a: number) => number;
    readonly scene_is_equivariant: (a: number) => number;
    readonly scene_n_beams: (a: number) => number;
    readonly scene_new: (a: bigint) => number;
    readonly scene_resample: (a: number, b: bigint) => void;
    readonly scene_rotate: (a: number) => void;
    readonly scene_rotation_residual: (a: number) => number;
    readonly scene_rsus: (a: number) => [number, number];
    readonly scene_set_equivariant: (a: number, b: number) => void;
    readonly scene_turns: (a: number) => number;
    readonly scene_vehicle_arms: (a: number) => [number, number];
    readonly scene_vehicles: (a: number) => [number, number];
    readonly symmetrize_random: (a: bigint, b: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
