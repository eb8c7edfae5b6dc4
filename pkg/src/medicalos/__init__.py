"""MedicalOS: an agent-operable clinical workflow layer.

Subpackages cover the patient record store, LLM gateway, knowledge
grounding, structured clinical documents, the diagnostic workflow state
machine, a ReAct tool-calling orchestrator, the evaluation harness, and
an HTTP facade plus operator CLI.
"""

__version__ = "0.1.0"
