/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const calibration_bins: (a: number, b: number, c: number, d: number, e: number, f: bigint, g: number, h: number) => [number, number, number, number];
export const optimal_weight: (a: number, b: number) => [number, number, number];
export const simulate_roc: (a: number, b: number, c: number, d: number, e: number, f: bigint, g: number) => [number, number, number, number];
export const w_sweep: (a: number, b: number, c: number, d: number, e: number, f: bigint, g: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
