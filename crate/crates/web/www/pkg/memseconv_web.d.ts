/* tslint:disable */
/* eslint-disable */

/**
 * Corrupt a procedural texture and restore it.
 *
 * `stages` uses the CLI syntax (`3:cross,5:ones`); `weight_mode` is
 * `differential` or `single`.
 */
export function denoise(texture_kind: string, size: number, texture_seed: number, density: number, noise_seed: number, model: string, stages: string, weight_mode: string): string;

/**
 * Resistance and current of one device driven from `R_ON` at `volts`.
 */
export function memristor_transient(volts: number, v_th: number, duration: number, points: number): string;

/**
 * MSC and MSCE power for an image of `n_pixels` at each tabulated density.
 */
export function power_vs_density(kernel: string, n_pixels: number, published_basis: boolean): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly denoise: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number, j: number, k: number, l: number) => [number, number, number, number];
    readonly memristor_transient: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly power_vs_density: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
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
