"""campaignkit: run and analyze message-framing outreach campaigns.

A campaign finds potential volunteers by keyword on a public stream, calls
them to action in small groups under one of several framing strategies,
tracks replies and interactions under a one-contact-per-user rule, and
computes participation metrics and corpus statistics from the append-only
event log. A built-in agent simulator makes the whole pipeline checkable at
desk scale.
"""

__version__ = "0.1.0"
