/**
 * Property-picker state. The central distinction: an explicit "none of
 * these apply" choice submits an empty property set, while skipping
 * submits nothing at all. Submission stays disabled until the annotator
 * has actually made a choice.
 */

export interface PickerState {
  selected: Set<string>;
  /** true after an explicit "none apply" choice */
  none: boolean;
  /** true once the annotator (or a restored annotation) made any choice */
  touched: boolean;
}

export function initialPicker(existing?: { properties: string[] } | null): PickerState {
  if (!existing) return { selected: new Set(), none: false, touched: false };
  // an empty stored set round-trips back to the explicit "none" choice
  if (existing.properties.length === 0) return { selected: new Set(), none: true, touched: true };
  return { selected: new Set(existing.properties), none: false, touched: true };
}

export function toggleProperty(state: PickerState, propertyId: string): PickerState {
  const selected = new Set(state.selected);
  if (selected.has(propertyId)) selected.delete(propertyId);
  else selected.add(propertyId);
  return { selected, none: false, touched: true };
}

export function chooseNone(state: PickerState): PickerState {
  void state;
  return { selected: new Set(), none: true, touched: true };
}

export interface AppliedSuggestion {
  state: PickerState;
  applied: string[];
  unknown: string[];
}

/**
 * Pre-fill the checkboxes from an assistant suggestion. Unknown property
 * ids are reported, never applied; a suggestion that is entirely unknown
 * leaves the picker untouched. Applying never submits.
 */
export function applySuggestion(
  state: PickerState,
  suggested: string[],
  known: Set<string>,
): AppliedSuggestion {
  const applied = suggested.filter((p) => known.has(p));
  const unknown = suggested.filter((p) => !known.has(p));
  if (suggested.length > 0 && applied.length === 0) {
    return { state, applied, unknown };
  }
  // an empty suggestion means the model thinks none apply
  const next: PickerState =
    applied.length === 0
      ? { selected: new Set(), none: true, touched: true }
      : { selected: new Set(applied), none: false, touched: true };
  return { state: next, applied, unknown };
}

export function canSubmit(state: PickerState): boolean {
  return state.none || state.selected.size > 0;
}

export function propertiesForSubmit(state: PickerState): string[] {
  return [...state.selected].sort();
}
