/** Typed client for the loopback service.
 *
 * Every URL is same-origin relative: the console must work with the
 * static bundle served by the service itself and never reach any other
 * host. All numbers displayed in the UI originate from these responses.
 */
export const MAX_IMAGE_BYTES = 10 * 1024 * 1024;
export class ApiError extends Error {
    constructor(status, message) {
        super(message);
        this.status = status;
        this.name = "ApiError";
    }
}
export class ServiceUnreachable extends Error {
    constructor() {
        super("service unreachable");
        this.name = "ServiceUnreachable";
    }
}
async function parseDetail(response) {
    try {
        const body = (await response.json());
        if (typeof body.detail === "string")
            return body.detail;
    }
    catch {
        // non-JSON error body; fall through to the status line
    }
    return `${response.status} ${response.statusText}`;
}
export class ApiClient {
    constructor(fetchFn = fetch) {
        this.fetchFn = fetchFn;
    }
    async request(path, init) {
        let response;
        try {
            response = await this.fetchFn(path, init);
        }
        catch {
            throw new ServiceUnreachable();
        }
        if (!response.ok) {
            throw new ApiError(response.status, await parseDetail(response));
        }
        return (await response.json());
    }
    health() {
        return this.request("/api/v1/health");
    }
    model() {
        return this.request("/api/v1/model");
    }
    screen(image, name) {
        const form = new FormData();
        form.append("image", image, name);
        return this.request("/api/v1/screen", {
            method: "POST",
            body: form,
        });
    }
    async listCases() {
        const body = await this.request("/api/v1/cases");
        return body.cases;
    }
    /** File a screened result as a case; omitting the decision leaves it pending. */
    createCase(caseId, result, decision, notes) {
        const payload = { case_id: caseId, result };
        if (decision !== undefined)
            payload.operator_decision = decision;
        if (notes !== undefined)
            payload.notes = notes;
        return this.postCase(payload);
    }
    /** Record the operator decision on an existing pending case. */
    decideCase(caseId, decision, notes) {
        const payload = {
            case_id: caseId,
            operator_decision: decision,
        };
        if (notes !== undefined)
            payload.notes = notes;
        return this.postCase(payload);
    }
    postCase(payload) {
        return this.request("/api/v1/cases", {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify(payload),
        });
    }
}
