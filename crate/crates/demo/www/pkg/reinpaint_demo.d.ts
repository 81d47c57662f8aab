/* tslint:disable */
/* eslint-disable */

export class Demo {
    free(): void;
    [Symbol.dispose](): void;
    consistency(k: number, ratio: number, metric: string, seed: number): string;
    draw_mask(kind: string, seed: number, lo: number, hi: number): number;
    /**
     * Empty until [`Demo::inpaint`] has run.
     */
    first_rgba(): Uint8Array;
    height(): number;
    image_rgba(): Uint8Array;
    inpaint(method: string, seed: number): void;
    constructor(width: number, height: number, seed: number);
    /**
     * The `i`-th re-inpainting with its second mask tinted.
     */
    second_rgba(i: number): Uint8Array;
    width(): number;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_demo_free: (a: number, b: number) => void;
    readonly demo_consistency: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly demo_draw_mask: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number];
    readonly demo_first_rgba: (a: number) => [number, number];
    readonly demo_height: (a: number) => number;
    readonly demo_image_rgba: (a: number) => [number, number];
    readonly demo_inpaint: (a: number, b: number, c: number, d: number) => [number, number];
    readonly demo_new: (a: number, b: number, c: number) => [number, number, number];
    readonly demo_second_rgba: (a: number, b: number) => [number, number];
    readonly demo_width: (a: number) => number;
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
