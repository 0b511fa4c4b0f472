from rest_framework import serializers
from .models import ExperimentRun, CheckResult


class CheckResultSerializer(serializers.ModelSerializer):
    class Meta:
        model = CheckResult
        fields = ['id', 'run', 'tag', 'passed', 'measured']


class ExperimentRunSerializer(serializers.ModelSerializer):
    status_display = serializers.CharField(source='get_status_display', read_only=True)
    checks = CheckResultSerializer(many=True, read_only=True)

    class Meta:
        model = ExperimentRun
        fields = [
            'id', 'name', 'output_dir', 'config_hash', 'master_seed', 'replicas',
            'status', 'status_display', 'wall_time', 'created_at', 'checks'
        ]
