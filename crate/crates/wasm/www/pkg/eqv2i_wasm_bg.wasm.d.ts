/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_scene_free: (a: number, b: number) => void;
export const rotated_beam: (a: number) => number;
export const scene_arm_length: (a: number) => number;
export const scene_greedy_beams: (a: number) => [number, number];
export const scene_greedy_reward: (a: number) => number;
export const scene_is_equivariant: (a: number) => number;
export const scene_n_beams: (a: number) => number;
export const scene_new: (a: bigint) => number;
export const scene_resample: (a: number, b: bigint) => void;
export const scene_rotate: (a: number) => void;
export const scene_rotation_residual: (a: number) => number;
export const scene_rsus: (a: number) => [number, number];
export const scene_set_equivariant: (a: number, b: number) => void;
export const scene_turns: (a: number) => number;
export const scene_vehicle_arms: (a: number) => [number, number];
export const scene_vehicles: (a: number) => [number, number];
export const symmetrize_random: (a: bigint, b: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
