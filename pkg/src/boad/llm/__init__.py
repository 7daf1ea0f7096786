from boad.llm.gateway import (
    ChatExchange,
    Gateway,
    GatewayError,
    HttpProvider,
    ProtocolError,
    ProviderConfig,
    TransportError,
    complete,
)
from boad.llm.mock import MockProvider, MockMiss
from boad.llm.templates import TemplateError, load_template, placeholders, render_template

__all__ = [
    "ChatExchange",
    "Gateway",
    "GatewayError",
    "HttpProvider",
    "MockMiss",
    "MockProvider",
    "ProtocolError",
    "ProviderConfig",
    "TemplateError",
    "TransportError",
    "complete",
    "load_template",
    "placeholders",
    "render_template",
]
