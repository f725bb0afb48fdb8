/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const image_height: () => number;
export const image_width: () => number;
export const object_diameter: (a: number, b: number) => [number, number, number];
export const refine: (a: number, b: number, c: number, d: number, e: number, f: number, g: number, h: number, i: number) => [number, number, number, number];
export const render_distance_field: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const render_overlay: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number, number];
export const symmetry_sweep: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;
