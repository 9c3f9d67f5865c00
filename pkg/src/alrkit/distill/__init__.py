from .clients import ChatClient, HttpChatClient, StubClient, TransportError, call_with_retries
from .pipeline import (DistillRecord, DistillSummary, DistillTask, build_minimal_context,
                       em_verify, judge_verify, load_template, make_teacher_request,
                       run_pipeline, task_from_json, template_sha256)
