// Batch labeling state, kept separate from the DOM so it can be tested
// directly. The invariant throughout: a label is only ever attached to a
// row the annotator explicitly chose it for.

import { BatchItem, Label, LabelEntry } from './api.js';

export interface Row {
  item: BatchItem;
  choice: Label | null;
}

export class BatchLabeler {
  rows: Row[] = [];
  cursor = 0;

  /** Replace the pending items, keeping choices for indices still present.
   * Items that disappeared (labeled elsewhere, or accepted by a submit)
   * are dropped; returns how many rows were removed. */
  setItems(items: BatchItem[]): number {
    const choices = new Map<number, Label | null>();
    for (const row of this.rows) {
      choices.set(row.item.index, row.choice);
    }
    const before = this.rows.length;
    this.rows = items.map((item) => ({ item, choice: choices.get(item.index) ?? null }));
    const removed = Math.max(0, before - this.rows.length);
    this.cursor = Math.min(this.cursor, Math.max(0, this.rows.length - 1));
    return removed;
  }

  /** Label the row under the cursor and advance to the next unlabeled row. */
  choose(label: Label): void {
    if (this.rows.length === 0) return;
    this.rows[this.cursor].choice = label;
    const next = this.rows.findIndex((row, i) => i > this.cursor && row.choice === null);
    if (next >= 0) {
      this.cursor = next;
    } else if (this.cursor < this.rows.length - 1) {
      this.cursor += 1;
    }
  }

  clearChoice(): void {
    if (this.rows.length > 0) {
      this.rows[this.cursor].choice = null;
    }
  }

  move(delta: number): void {
    if (this.rows.length === 0) return;
    this.cursor = Math.min(Math.max(this.cursor + delta, 0), this.rows.length - 1);
  }

  /** The partial-save set: exactly the rows the annotator labeled. */
  chosen(): LabelEntry[] {
    return this.rows
      .filter((row) => row.choice !== null)
      .map((row) => ({ index: row.item.index, label: row.choice as Label }));
  }

  unlabeledCount(): number {
    return this.rows.filter((row) => row.choice === null).length;
  }

  isEmpty(): boolean {
    return this.rows.length === 0;
  }
}
