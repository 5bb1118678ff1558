/**
 * Node bindings for the csot solvers.
 *
 * Each call encodes its inputs into the CSOTMAT1 wire format, runs the
 * installed `csot` command-line tool in a scratch directory, and decodes the
 * written outputs. Solves run with `--deterministic` by default, so results
 * are byte-for-byte identical to what the solver process writes. Calls are
 * async: the solve happens in a child process and never blocks the event
 * loop. Outputs are decoded into buffers owned by the returned objects;
 * caller-provided input buffers are only ever read.
 */

import { execFile } from "node:child_process";
import { mkdtemp, readFile, rm, writeFile } from "node:fs/promises";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { BoundMatrixView, decodeMatrix, encodeCsvRow, encodeMatrix } from "./matrix.js";

export { BoundMatrixView, decodeMatrix, encodeMatrix, MatrixFormatError } from "./matrix.js";

export type SolveKind = "sinkhorn" | "cot-dykstra" | "cot-esi" | "csot";

export interface SolveInputs {
  cost: BoundMatrixView;
  rowMarginal: Float64Array;
  colMarginal: Float64Array;
  /** required for kind "csot" */
  predictions?: BoundMatrixView;
  labels?: BoundMatrixView;
  similarity?: BoundMatrixView;
}

export interface SolveConfig {
  epsilon?: number;
  kappa?: number;
  budget?: number;
  innerIters?: number;
  outerIters?: number;
  /** defaults to true; reruns are then byte-identical */
  deterministic?: boolean;
  strict?: boolean;
  /** override the executable, e.g. an absolute path; defaults to $CSOT_BIN or "csot" */
  bin?: string;
}

export interface SolveReport {
  algo: string;
  iterations: number;
  converged: boolean;
  objective_trace: number[];
  row_residual: number;
  col_residual: number;
  wall_time_ms: number;
}

export interface SolveResult {
  matrix: BoundMatrixView;
  report: SolveReport;
}

export interface RelabelResult {
  budget: number;
  pseudoLabels: number[];
  weights: number[];
  selected: boolean[];
  cleanIndices: number[];
  corruptedIndices: number[];
  report: SolveReport;
}

/** Error from the solver process, carrying its machine-readable code. */
export class CsotCliError extends Error {
  constructor(
    message: string,
    readonly code: string,
    readonly exitStatus: number,
  ) {
    super(message);
  }
}

function binaryName(config: SolveConfig): string {
  return config.bin ?? process.env["CSOT_BIN"] ?? "csot";
}

function runCli(bin: string, args: string[]): Promise<void> {
  return new Promise((resolve, reject) => {
    execFile(bin, args, { maxBuffer: 1 << 24 }, (error, _stdout, stderr) => {
      if (!error) return resolve();
      const status = typeof error.code === "number" ? error.code : 1;
      const line = stderr.trim().split("\n").pop() ?? "";
      const match = /^(E_[A-Z]+):\s*(.*)$/.exec(line);
      if (match) {
        return reject(new CsotCliError(match[2]!, match[1]!, status));
      }
      return reject(new CsotCliError(line || error.message, "E_INTERNAL", status));
    });
  });
}

function solverFlags(config: SolveConfig): string[] {
  const flags: string[] = [];
  if (config.epsilon !== undefined) flags.push("--epsilon", String(config.epsilon));
  if (config.kappa !== undefined) flags.push("--kappa", String(config.kappa));
  if (config.budget !== undefined) flags.push("--budget", String(config.budget));
  if (config.innerIters !== undefined) flags.push("--inner-iters", String(config.innerIters));
  if (config.outerIters !== undefined) flags.push("--outer-iters", String(config.outerIters));
  if (config.deterministic !== false) flags.push("--deterministic");
  if (config.strict) flags.push("--strict");
  return flags;
}

async function inScratchDir<T>(body: (dir: string) => Promise<T>): Promise<T> {
  const dir = await mkdtemp(join(tmpdir(), "csot-bindings-"));
  try {
    return await body(dir);
  } finally {
    await rm(dir, { recursive: true, force: true });
  }
}

/**
 * Run one solver through the command-line interface.
 *
 * The returned matrix decodes the exact bytes the solver wrote, so in
 * deterministic mode it is bitwise identical to a direct CLI run on the
 * same inputs.
 */
export async function boundSolve(
  kind: SolveKind,
  inputs: SolveInputs,
  config: SolveConfig = {},
): Promise<SolveResult> {
  if (inputs.cost.rows !== inputs.rowMarginal.length) {
    throw new CsotCliError(
      `cost has ${inputs.cost.rows} rows but row marginal has ${inputs.rowMarginal.length}`,
      "E_DIM",
      1,
    );
  }
  if (inputs.cost.cols !== inputs.colMarginal.length) {
    throw new CsotCliError(
      `cost has ${inputs.cost.cols} cols but column marginal has ${inputs.colMarginal.length}`,
      "E_DIM",
      1,
    );
  }
  if (kind === "csot" && !(inputs.predictions && inputs.labels && inputs.similarity)) {
    throw new CsotCliError(
      "kind csot needs predictions, labels and similarity",
      "E_FLAG",
      1,
    );
  }
  return inScratchDir(async (dir) => {
    const costPath = join(dir, "C.csmat");
    const aPath = join(dir, "a.csv");
    const bPath = join(dir, "b.csv");
    const outPath = join(dir, "Q.csmat");
    const reportPath = join(dir, "report.json");
    await writeFile(costPath, encodeMatrix(inputs.cost));
    await writeFile(aPath, encodeCsvRow(inputs.rowMarginal));
    await writeFile(bPath, encodeCsvRow(inputs.colMarginal));
    const args = [
      "solve",
      "--algo", kind,
      "--cost", costPath,
      "--row-marginal", aPath,
      "--col-marginal", bPath,
      "--out", outPath,
      "--report", reportPath,
      ...solverFlags(config),
    ];
    if (kind === "csot") {
      const predPath = join(dir, "P.csmat");
      const labelPath = join(dir, "L.csmat");
      const simPath = join(dir, "S.csmat");
      await writeFile(predPath, encodeMatrix(inputs.predictions!));
      await writeFile(labelPath, encodeMatrix(inputs.labels!));
      await writeFile(simPath, encodeMatrix(inputs.similarity!));
      args.push("--pred", predPath, "--labels", labelPath, "--sim", simPath);
    }
    await runCli(binaryName(config), args);
    const matrix = decodeMatrix(await readFile(outPath));
    const report = JSON.parse(await readFile(reportPath, "utf8")) as SolveReport;
    return { matrix, report };
  });
}

export function solveSinkhorn(inputs: SolveInputs, config?: SolveConfig): Promise<SolveResult> {
  return boundSolve("sinkhorn", inputs, config);
}

export function solveCotEsi(inputs: SolveInputs, config?: SolveConfig): Promise<SolveResult> {
  return boundSolve("cot-esi", inputs, config);
}

export function solveCsotGcg(inputs: SolveInputs, config?: SolveConfig): Promise<SolveResult> {
  return boundSolve("csot", inputs, config);
}

/** Full allocator on one batch: pseudo-labels, weights, selection, split. */
export async function denoiseRelabelBatch(
  predictions: BoundMatrixView,
  similarity: BoundMatrixView,
  noisyLabels: ArrayLike<number>,
  budget: number,
  config: SolveConfig = {},
): Promise<RelabelResult> {
  if (similarity.rows !== predictions.rows || similarity.cols !== predictions.rows) {
    throw new CsotCliError(
      `similarity must be ${predictions.rows}x${predictions.rows}, got ` +
        `${similarity.rows}x${similarity.cols}`,
      "E_DIM",
      1,
    );
  }
  if (noisyLabels.length !== predictions.rows) {
    throw new CsotCliError(
      `expected ${predictions.rows} labels, got ${noisyLabels.length}`,
      "E_DIM",
      1,
    );
  }
  return inScratchDir(async (dir) => {
    const predPath = join(dir, "P.csmat");
    const simPath = join(dir, "S.csmat");
    const labelPath = join(dir, "y.csv");
    const outPath = join(dir, "outcome.json");
    await writeFile(predPath, encodeMatrix(predictions));
    await writeFile(simPath, encodeMatrix(similarity));
    await writeFile(labelPath, encodeCsvRow(noisyLabels));
    await runCli(binaryName(config), [
      "relabel",
      "--pred", predPath,
      "--sim", simPath,
      "--noisy-labels", labelPath,
      "--budget", String(budget),
      "--out", outPath,
      ...solverFlags(config),
    ]);
    const raw = JSON.parse(await readFile(outPath, "utf8"));
    return {
      budget: raw.budget as number,
      pseudoLabels: raw.pseudo_labels as number[],
      weights: raw.weights as number[],
      selected: (raw.selected as number[]).map((x) => x !== 0),
      cleanIndices: raw.clean_indices as number[],
      corruptedIndices: raw.corrupted_indices as number[],
      report: raw.report as SolveReport,
    };
  });
}
