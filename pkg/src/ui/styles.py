"""Custom CSS styles for the dashboard"""

CUSTOM_CSS = """
<style>
    .main-header {
        font-size: 2.6rem;
        font-weight: bold;
        background: linear-gradient(90deg, #667eea 0%, #ff6b6b 100%);
        -webkit-background-clip: text;
        -webkit-text-fill-color: transparent;
        margin-bottom: 0.5rem;
    }
    .sub-header {
        color: #888;
        font-size: 1.05rem;
        margin-bottom: 1.5rem;
    }
    .stat-card {
        background: linear-gradient(135deg, #667eea 0%, #764ba2 100%);
        padding: 1.2rem;
        border-radius: 10px;
        color: white;
        text-align: center;
    }
    .stat-card.timeout {
        background: linear-gradient(135deg, #ff6b6b 0%, #a83279 100%);
    }
    .stat-number {
        font-size: 2rem;
        font-weight: bold;
        margin: 0;
    }
    .stat-label {
        font-size: 0.85rem;
        opacity: 0.9;
    }
    .info-box {
        background-color: rgba(102, 126, 234, 0.1);
        padding: 15px;
        border-radius: 10px;
        margin-bottom: 20px;
    }
    .info-box h4 {
        margin-top: 0;
        color: #667eea;
    }
</style>
"""
