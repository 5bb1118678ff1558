import { execFile } from "node:child_process";
import { mkdtemp, readFile, rm, writeFile } from "node:fs/promises";
import { tmpdir } from "node:os";
import { join } from "node:path";
import { promisify } from "node:util";

import { afterAll, describe, expect, test } from "vitest";

import {
  BoundMatrixView,
  CsotCliError,
  boundSolve,
  denoiseRelabelBatch,
  encodeMatrix,
  solveCotEsi,
  solveCsotGcg,
  solveSinkhorn,
} from "../src/index.js";
import { encodeCsvRow } from "../src/matrix.js";

const run = promisify(execFile);
const BIN = process.env["CSOT_BIN"] ?? "csot";

/** Deterministic uniform(0,1) stream so fixtures are reproducible. */
function lcg(seed: number): () => number {
  let state = seed >>> 0;
  return () => {
    state = (state * 1664525 + 1013904223) >>> 0;
    return (state + 0.5) / 4294967296;
  };
}

function uniformMatrix(rows: number, cols: number, seed: number): BoundMatrixView {
  const next = lcg(seed);
  const data = new Float64Array(rows * cols);
  for (let i = 0; i < data.length; i++) data[i] = next();
  return new BoundMatrixView(rows, cols, data);
}

function uniformMarginal(n: number, mass: number): Float64Array {
  return new Float64Array(n).fill(mass / n);
}

/** Row-normalized positives: a valid softmax prediction matrix. */
function simplexRows(rows: number, cols: number, seed: number): BoundMatrixView {
  const m = uniformMatrix(rows, cols, seed);
  for (let i = 0; i < rows; i++) {
    let s = 0;
    for (let j = 0; j < cols; j++) s += m.data[i * cols + j]! + 0.05;
    for (let j = 0; j < cols; j++) {
      m.data[i * cols + j] = (m.data[i * cols + j]! + 0.05) / s;
    }
  }
  return m;
}

/** Exactly symmetric unit-diagonal cosine similarity of random features. */
function cosineSimilarity(n: number, dim: number, seed: number): BoundMatrixView {
  const feats = uniformMatrix(n, dim, seed);
  for (let i = 0; i < n * dim; i++) feats.data[i] = feats.data[i]! - 0.5;
  const norms = new Float64Array(n);
  for (let i = 0; i < n; i++) {
    let s = 0;
    for (let d = 0; d < dim; d++) s += feats.at(i, d) ** 2;
    norms[i] = Math.sqrt(s);
  }
  const out = new Float64Array(n * n);
  for (let i = 0; i < n; i++) {
    out[i * n + i] = 1;
    for (let j = i + 1; j < n; j++) {
      let dot = 0;
      for (let d = 0; d < dim; d++) dot += feats.at(i, d) * feats.at(j, d);
      const value = Math.max(-1, Math.min(1, dot / (norms[i]! * norms[j]!)));
      out[i * n + j] = value;
      out[j * n + i] = value;
    }
  }
  return new BoundMatrixView(n, n, out);
}

function oneHot(labels: number[], classes: number): BoundMatrixView {
  const data = new Float64Array(labels.length * classes);
  labels.forEach((c, i) => {
    data[i * classes + c] = 1;
  });
  return new BoundMatrixView(labels.length, classes, data);
}

function negLog(view: BoundMatrixView): BoundMatrixView {
  const data = new Float64Array(view.data.length);
  for (let i = 0; i < data.length; i++) data[i] = -Math.log(Math.max(view.data[i]!, 1e-30));
  return new BoundMatrixView(view.rows, view.cols, data);
}

const scratchDirs: string[] = [];
afterAll(async () => {
  await Promise.all(scratchDirs.map((d) => rm(d, { recursive: true, force: true })));
});

async function directCliSolve(
  kind: string,
  inputs: {
    cost: BoundMatrixView;
    rowMarginal: Float64Array;
    colMarginal: Float64Array;
    predictions?: BoundMatrixView;
    labels?: BoundMatrixView;
    similarity?: BoundMatrixView;
  },
  flags: string[],
): Promise<{ qBytes: Buffer; report: unknown }> {
  const dir = await mkdtemp(join(tmpdir(), "csot-parity-"));
  scratchDirs.push(dir);
  await writeFile(join(dir, "C.csmat"), encodeMatrix(inputs.cost));
  await writeFile(join(dir, "a.csv"), encodeCsvRow(inputs.rowMarginal));
  await writeFile(join(dir, "b.csv"), encodeCsvRow(inputs.colMarginal));
  const args = [
    "solve",
    "--algo", kind,
    "--cost", join(dir, "C.csmat"),
    "--row-marginal", join(dir, "a.csv"),
    "--col-marginal", join(dir, "b.csv"),
    "--out", join(dir, "Q.csmat"),
    "--report", join(dir, "report.json"),
    "--deterministic",
    ...flags,
  ];
  if (inputs.predictions) {
    await writeFile(join(dir, "P.csmat"), encodeMatrix(inputs.predictions));
    await writeFile(join(dir, "L.csmat"), encodeMatrix(inputs.labels!));
    await writeFile(join(dir, "S.csmat"), encodeMatrix(inputs.similarity!));
    args.push(
      "--pred", join(dir, "P.csmat"),
      "--labels", join(dir, "L.csmat"),
      "--sim", join(dir, "S.csmat"),
    );
  }
  await run(BIN, args);
  return {
    qBytes: await readFile(join(dir, "Q.csmat")),
    report: JSON.parse(await readFile(join(dir, "report.json"), "utf8")),
  };
}

describe("solver parity through the bindings", () => {
  test("zero-cost balanced fixture gives the uniform coupling", async () => {
    const { matrix, report } = await solveSinkhorn({
      cost: new BoundMatrixView(2, 2, new Float64Array(4)),
      rowMarginal: uniformMarginal(2, 1),
      colMarginal: uniformMarginal(2, 1),
    });
    expect(Array.from(matrix.data)).toEqual([0.25, 0.25, 0.25, 0.25]);
    expect(report.converged).toBe(true);
    expect(report.wall_time_ms).toBe(0);
  });

  test("curriculum scaling solve matches a direct CLI run bitwise", async () => {
    const inputs = {
      cost: uniformMatrix(50, 10, 42),
      rowMarginal: uniformMarginal(50, 1),
      colMarginal: uniformMarginal(10, 0.5),
    };
    const viaBindings = await solveCotEsi(inputs);
    const direct = await directCliSolve("cot-esi", inputs, []);
    expect(encodeMatrix(viaBindings.matrix).equals(direct.qBytes)).toBe(true);
    expect(viaBindings.report).toEqual(direct.report);
  });

  test("dense projection solve matches a direct CLI run bitwise", async () => {
    const inputs = {
      cost: uniformMatrix(24, 6, 7),
      rowMarginal: uniformMarginal(24, 1),
      colMarginal: uniformMarginal(6, 0.3),
    };
    const viaBindings = await boundSolve("cot-dykstra", inputs);
    const direct = await directCliSolve("cot-dykstra", inputs, []);
    expect(encodeMatrix(viaBindings.matrix).equals(direct.qBytes)).toBe(true);
  });

  test("structure-aware solve matches a direct CLI run bitwise", async () => {
    const B = 16;
    const C = 4;
    const predictions = simplexRows(B, C, 11);
    const labels = oneHot(Array.from({ length: B }, (_, i) => i % C), C);
    const similarity = cosineSimilarity(B, 6, 13);
    const inputs = {
      cost: negLog(predictions),
      rowMarginal: uniformMarginal(B, 1),
      colMarginal: uniformMarginal(C, 0.5),
      predictions,
      labels,
      similarity,
    };
    const config = { epsilon: 0.1, kappa: 1.0, innerIters: 50, outerIters: 5 };
    const viaBindings = await solveCsotGcg(inputs, config);
    const direct = await directCliSolve("csot", inputs, [
      "--epsilon", "0.1", "--kappa", "1.0", "--inner-iters", "50", "--outer-iters", "5",
    ]);
    expect(encodeMatrix(viaBindings.matrix).equals(direct.qBytes)).toBe(true);
    expect(viaBindings.report).toEqual(direct.report);
    const trace = viaBindings.report.objective_trace;
    for (let i = 1; i < trace.length; i++) {
      expect(trace[i]!).toBeLessThanOrEqual(trace[i - 1]! + 1e-12);
    }
  });

  test("relabel returns the allocator outcome", async () => {
    const B = 12;
    const C = 3;
    const predictions = simplexRows(B, C, 21);
    const similarity = cosineSimilarity(B, 5, 22);
    const noisy = Array.from({ length: B }, (_, i) => i % C);
    const outcome = await denoiseRelabelBatch(predictions, similarity, noisy, 0.5, {
      innerIters: 50,
      outerIters: 3,
    });
    expect(outcome.pseudoLabels).toHaveLength(B);
    expect(outcome.selected.filter(Boolean)).toHaveLength(Math.floor(0.5 * B));
    const again = await denoiseRelabelBatch(predictions, similarity, noisy, 0.5, {
      innerIters: 50,
      outerIters: 3,
    });
    expect(again).toEqual(outcome);
  });

  test("repeated deterministic solves are byte-identical", async () => {
    const inputs = {
      cost: uniformMatrix(30, 5, 33),
      rowMarginal: uniformMarginal(30, 1),
      colMarginal: uniformMarginal(5, 0.4),
    };
    const first = await solveCotEsi(inputs);
    const second = await solveCotEsi(inputs);
    expect(encodeMatrix(first.matrix).equals(encodeMatrix(second.matrix))).toBe(true);
  });
});

describe("error mapping", () => {
  test("dimension mismatch raises E_DIM before spawning", async () => {
    await expect(
      solveCotEsi({
        cost: uniformMatrix(4, 3, 1),
        rowMarginal: uniformMarginal(5, 1),
        colMarginal: uniformMarginal(3, 0.5),
      }),
    ).rejects.toMatchObject({ code: "E_DIM" });
  });

  test("solver-side dimension error surfaces with its code", async () => {
    // marginals agree with the cost locally but violate the mass ordering
    await expect(
      solveCotEsi({
        cost: uniformMatrix(4, 3, 2),
        rowMarginal: uniformMarginal(4, 0.2),
        colMarginal: uniformMarginal(3, 0.9),
      }),
    ).rejects.toMatchObject({ code: "E_VALUE" });
  });

  test("missing structure inputs for csot raise E_FLAG", async () => {
    await expect(
      boundSolve("csot", {
        cost: uniformMatrix(4, 3, 3),
        rowMarginal: uniformMarginal(4, 1),
        colMarginal: uniformMarginal(3, 0.5),
      }),
    ).rejects.toMatchObject({ code: "E_FLAG" });
  });

  test("unknown binary raises a useful error", async () => {
    await expect(
      solveCotEsi(
        {
          cost: uniformMatrix(2, 2, 4),
          rowMarginal: uniformMarginal(2, 1),
          colMarginal: uniformMarginal(2, 0.5),
        },
        { bin: "/nonexistent/csot-binary" },
      ),
    ).rejects.toBeInstanceOf(CsotCliError);
  });
});
