/* tslint:disable */
/* eslint-disable */

/**
 * Basis coefficients for atoms given as `[[size, rate], ...]`, plus the
 * polynomials sampled on `[x_min, x_max]`.
 */
export function basis(atoms_json: string, sigma0: number, m: number, x_min: number, x_max: number): string;

/**
 * `Y_0^n` of the deterministic-obstacle scenario for each penalty in
 * `n_list_json`, against the direct reflection.
 */
export function penalization_curve(n_list_json: string, t_end: number, n_steps: number): string;

/**
 * A few paths of `L` and `H^(1..m)` on `[0, t_end]`.
 */
export function teugels_paths(atoms_json: string, drift: number, m: number, t_end: number, n_steps: number, n_paths: number, seed: bigint): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly basis: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly penalization_curve: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly teugels_paths: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: bigint) => [number, number, number, number];
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
