/** REST client for the annotation service. */

import {
  AnnotationRecord,
  InferResponse,
  PointPayload,
  StudyInfo,
} from './types';

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(`${status}: ${detail}`);
  }
}

async function parseError(res: Response): Promise<ApiError> {
  let detail = res.statusText;
  try {
    const body = await res.json();
    if (body && typeof body.detail === 'string') detail = body.detail;
  } catch {
    // non-JSON error body
  }
  return new ApiError(res.status, detail);
}

export class AnnotationApi {
  constructor(
    private baseUrl: string,
    private fetchFn: typeof fetch = fetch,
  ) {}

  async health(): Promise<{ status: string; model_loaded: boolean }> {
    const res = await this.fetchFn(`${this.baseUrl}/healthz`);
    if (!res.ok) throw await parseError(res);
    return res.json();
  }

  async listStudies(): Promise<StudyInfo[]> {
    const res = await this.fetchFn(`${this.baseUrl}/studies`);
    if (!res.ok) throw await parseError(res);
    return res.json();
  }

  sliceUrl(studyId: string, axis: string, index: number): string {
    return `${this.baseUrl}/studies/${studyId}/slices/${axis}/${index}`;
  }

  async fetchSlice(studyId: string, axis: string, index: number): Promise<Blob> {
    const res = await this.fetchFn(this.sliceUrl(studyId, axis, index));
    if (!res.ok) throw await parseError(res);
    return res.blob();
  }

  /** Stored annotation record, or null when none has been saved. */
  async getPoints(studyId: string): Promise<AnnotationRecord | null> {
    const res = await this.fetchFn(`${this.baseUrl}/studies/${studyId}/extreme-points`);
    if (res.status === 404) return null;
    if (!res.ok) throw await parseError(res);
    return res.json();
  }

  async putPoints(
    studyId: string,
    points: PointPayload[],
    annotator: string,
  ): Promise<AnnotationRecord> {
    const res = await this.fetchFn(
      `${this.baseUrl}/studies/${studyId}/extreme-points`,
      {
        method: 'PUT',
        headers: { 'Content-Type': 'application/json' },
        body: JSON.stringify({ annotator, points }),
      },
    );
    if (!res.ok) throw await parseError(res);
    return res.json();
  }

  async infer(studyId: string): Promise<InferResponse> {
    const res = await this.fetchFn(`${this.baseUrl}/studies/${studyId}/infer`, {
      method: 'POST',
    });
    if (!res.ok) throw await parseError(res);
    return res.json();
  }
}
