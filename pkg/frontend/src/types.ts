// Wire types of the annotation API. Plan payloads are blind: outputs are
// addressed by display position only, never by system id.

export interface CriterionSpec {
  key: string;
  prompt: string;
}

export interface PlanItem {
  item_id: string;
  doc_id: string;
  sent_index: number;
  source: string;
  outputs: string[];
  labels: string[];
}

export interface Plan {
  annotator: string;
  criteria: CriterionSpec[];
  scale: string[];
  items: PlanItem[];
}

export interface RatingSubmission {
  annotator: string;
  item_id: string;
  output_index: number;
  criterion: string;
  value: number;
}

export interface ProgressItem {
  item_id: string;
  answered: number;
  complete: boolean;
}

export interface Progress {
  annotator: string;
  total: number;
  completed: number;
  complete: boolean;
  items: ProgressItem[];
}
